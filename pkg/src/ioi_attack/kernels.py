"""Back-end selection for the 3x3 stencil kernels.

The compiled core (``_kernels``) is used when it imports; otherwise the numpy
twins in ``_kernels_py`` are used. Set ``IOI_ATTACK_PURE_PYTHON=1`` to force
the fallback.
"""
import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

_NAMES = (
    "box3_stats",
    "box3_relstd",
    "sobel_magnitude",
    "laplace_valid",
    "laplace_adjoint",
    "conv_softplus_mean",
    "conv_softplus_mean_grad",
)


def _load_compiled():
    if os.environ.get("IOI_ATTACK_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _kernels
    except ImportError as exc:
        log.debug("compiled kernels unavailable: %s", exc)
        return None
    return _kernels


_compiled = _load_compiled()
_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "numpy"

box3_stats = _impl.box3_stats
box3_relstd = _impl.box3_relstd
sobel_magnitude = _impl.sobel_magnitude
laplace_valid = _impl.laplace_valid
laplace_adjoint = _impl.laplace_adjoint
conv_softplus_mean = _impl.conv_softplus_mean
conv_softplus_mean_grad = _impl.conv_softplus_mean_grad


def backends():
    """Map backend name to module for every back-end that can be imported,
    regardless of which one is active."""
    out = {"numpy": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        return out
    out["cython"] = _kernels
    return out
