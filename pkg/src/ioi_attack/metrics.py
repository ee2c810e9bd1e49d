"""Quality metrics.

No-reference metrics are exposed as gradient oracles: objects with
``score(img)`` and ``gradient(img)``. Two analytically differentiable toy
oracles are built in. PSNR and SSIM are the full-reference metrics used for
reporting.
"""
import math
import threading
from dataclasses import dataclass

import numpy as np

from . import kernels
from .image_core import as_image


class OracleError(RuntimeError):
    """Raised when an oracle fails the finite-difference admission check."""


@dataclass(frozen=True)
class MetricScore:
    value: float
    range_lo: float
    range_hi: float

    def __post_init__(self):
        if not self.range_hi > self.range_lo:
            raise ValueError(f"empty score range [{self.range_lo}, {self.range_hi}]")

    @property
    def span(self):
        return self.range_hi - self.range_lo


def relative_gain(m_adv, m_orig):
    """Score change divided by the metric's declared range; negative = decrease."""
    if (m_adv.range_lo, m_adv.range_hi) != (m_orig.range_lo, m_orig.range_hi):
        raise ValueError("scores come from different ranges")
    span = m_orig.range_hi - m_orig.range_lo
    if span <= 0:
        raise ValueError("zero-width score range")
    return (m_adv.value - m_orig.value) / span


class GradientOracle:
    """Base class for attackable metrics.

    Subclasses implement :meth:`_value` and :meth:`_value_and_grad` on raw
    (H, W, C) arrays. ``thread_safe`` tells the harness whether calls may run
    concurrently.
    """

    name = "oracle"
    min_size = 3
    thread_safe = True
    # central-difference step used by the admission check
    fd_step = 1e-3

    def __init__(self, score_range):
        lo, hi = (float(v) for v in score_range)
        if not hi > lo:
            raise ValueError(f"empty score range [{lo}, {hi}]")
        self.range = (lo, hi)
        self._admitted = set()
        self._admit_lock = threading.Lock()

    def _check(self, img):
        img = as_image(img)
        if img.height < self.min_size or img.width < self.min_size:
            raise ValueError(
                f"{self.name} needs at least {self.min_size}x{self.min_size} pixels, "
                f"got {img.height}x{img.width}")
        return img

    def _wrap(self, v):
        return MetricScore(float(v), *self.range)

    def score(self, img):
        img = self._check(img)
        return self._wrap(self._value(img.data))

    def gradient(self, img):
        img = self._check(img)
        return self._value_and_grad(img.data)[1]

    def score_and_gradient(self, img):
        img = self._check(img)
        v, g = self._value_and_grad(img.data)
        return self._wrap(v), g

    def config(self):
        return {"name": self.name, "range": list(self.range)}

    def _value(self, x):
        raise NotImplementedError

    def _value_and_grad(self, x):
        raise NotImplementedError


class LaplaceSharpness(GradientOracle):
    """Mean of s(L) with L the 5-point Laplacian and s(z) = z * tanh(k z).

    Rewards local contrast, so it behaves like a (very crude) sharpness or
    quality score. Only interior pixels carry a Laplacian.
    """

    name = "laplace"
    min_size = 3
    # at 1e-3 the tanh curvature (k = 10) alone gives ~3e-4 truncation error
    fd_step = 1e-4

    def __init__(self, sharpness=10.0, score_range=(0.0, 1.0)):
        super().__init__(score_range)
        self.sharpness = float(sharpness)

    def config(self):
        return {**super().config(), "sharpness": self.sharpness}

    def _value(self, x):
        k = self.sharpness
        total = 0.0
        count = 0
        for c in range(x.shape[2]):
            lap = kernels.laplace_valid(x[:, :, c])
            total += float(np.sum(lap * np.tanh(k * lap)))
            count += lap.size
        return total / count

    def _value_and_grad(self, x):
        k = self.sharpness
        h, w, nc = x.shape
        n = (h - 2) * (w - 2) * nc
        grad = np.empty_like(x)
        total = 0.0
        for c in range(nc):
            lap = kernels.laplace_valid(x[:, :, c])
            t = np.tanh(k * lap)
            total += float(np.sum(lap * t))
            ds = t + k * lap * (1.0 - t * t)
            grad[:, :, c] = kernels.laplace_adjoint(ds / n, h, w)
        return total / n, grad


class ToyCNN(GradientOracle):
    """One conv layer, softplus, global average and a saturating output map.

    The 3x3 kernels are drawn from ``seed`` and made zero-mean, so flat
    images score ``lo + span * (1 - exp(-mean(softplus(bias))))``. Gradients
    come from a hand-written backward pass in the kernel core.
    """

    name = "cnn"
    min_size = 8

    def __init__(self, seed=0, score_range=(0.0, 100.0), n_filters=4, stride=2,
                 weight_scale=0.5, bias_scale=0.1):
        super().__init__(score_range)
        self.seed = int(seed)
        self.n_filters = int(n_filters)
        self.stride = int(stride)
        rng = np.random.default_rng(self.seed)
        w = rng.normal(0.0, weight_scale, size=(self.n_filters, 3, 3, 3))
        w -= w.mean(axis=(1, 2, 3), keepdims=True)
        self._weights3 = w
        # grayscale input sees the channel sum, which stays zero-mean
        self._weights1 = w.sum(axis=1, keepdims=True)
        self.bias = rng.normal(0.0, bias_scale, size=self.n_filters)

    def config(self):
        return {**super().config(), "seed": self.seed, "n_filters": self.n_filters,
                "stride": self.stride}

    def weights_for(self, channels):
        return self._weights3 if channels == 3 else self._weights1

    def _squash(self, a):
        lo, hi = self.range
        return lo + (hi - lo) * (1.0 - math.exp(-a))

    def _value(self, x):
        a = kernels.conv_softplus_mean(x, self.weights_for(x.shape[2]), self.bias, self.stride)
        return self._squash(a)

    def _value_and_grad(self, x):
        a, da = kernels.conv_softplus_mean_grad(
            x, self.weights_for(x.shape[2]), self.bias, self.stride)
        lo, hi = self.range
        return self._squash(a), da * ((hi - lo) * math.exp(-a))


class CountingOracle(GradientOracle):
    """Wraps an oracle and counts score/gradient calls."""

    def __init__(self, inner):
        super().__init__(inner.range)
        self.inner = inner
        self.name = inner.name
        self.min_size = inner.min_size
        self.fd_step = inner.fd_step
        self.thread_safe = inner.thread_safe
        self._admitted = inner._admitted
        self._admit_lock = inner._admit_lock
        self._count_lock = threading.Lock()
        self.score_calls = 0
        self.gradient_calls = 0

    def config(self):
        return self.inner.config()

    def _value(self, x):
        with self._count_lock:
            self.score_calls += 1
        return self.inner._value(x)

    def _value_and_grad(self, x):
        with self._count_lock:
            self.gradient_calls += 1
        return self.inner._value_and_grad(x)


ORACLES = {
    "laplace": LaplaceSharpness,
    "toy_metric_laplace": LaplaceSharpness,
    "cnn": ToyCNN,
    "toy_metric_cnn": ToyCNN,
}


def make_oracle(name, seed=0, score_range=None):
    """Build a registered oracle from its config entry."""
    try:
        cls = ORACLES[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; choose from {sorted(ORACLES)}") from None
    kwargs = {}
    if score_range is not None:
        kwargs["score_range"] = tuple(score_range)
    if cls is ToyCNN:
        kwargs["seed"] = seed
    return cls(**kwargs)


# -- gradient admission ----------------------------------------------------

FD_RTOL = 1e-4
FD_PROBES = 16


def finite_difference_probe(oracle, img, n_probes=FD_PROBES, step=None, rng=None):
    """Analytic and central-difference gradients at random probe pixels.

    Returns ``(analytic, numeric)`` arrays of length ``n_probes``. ``step``
    defaults to the oracle's ``fd_step``.
    """
    img = as_image(img)
    rng = np.random.default_rng(0) if rng is None else rng
    step = oracle.fd_step if step is None else step
    x = img.data
    g = oracle.gradient(img)
    flat = rng.choice(x.size, size=min(n_probes, x.size), replace=False)
    analytic = np.empty(flat.size)
    numeric = np.empty(flat.size)
    for i, idx in enumerate(flat):
        pos = np.unravel_index(idx, x.shape)
        xp = x.copy()
        xm = x.copy()
        xp[pos] += step
        xm[pos] -= step
        numeric[i] = (oracle._value(xp) - oracle._value(xm)) / (2.0 * step)
        analytic[i] = g[pos]
    return analytic, numeric


def gradient_relative_error(analytic, numeric):
    """||analytic - numeric|| / ||numeric|| over the probe vector."""
    den = float(np.linalg.norm(numeric))
    num = float(np.linalg.norm(np.asarray(analytic) - numeric))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def admit(oracle, channels=3, size=16, seed=0):
    """Run the finite-difference admission check once per channel count.

    Raises :class:`OracleError` if the probe error exceeds ``FD_RTOL``.
    """
    with oracle._admit_lock:
        if channels in oracle._admitted:
            return
        rng = np.random.default_rng(seed)
        side = max(size, oracle.min_size)
        probe = rng.random((side, side, channels))
        err = gradient_relative_error(*finite_difference_probe(oracle, probe, rng=rng))
        if not err <= FD_RTOL:
            raise OracleError(
                f"{oracle.name}: gradient disagrees with finite differences "
                f"(relative error {err:.3g} > {FD_RTOL})")
        oracle._admitted.add(channels)


# -- full-reference metrics ------------------------------------------------

def _check_pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """PSNR in dB for peak 1.0; ``math.inf`` for identical images."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _gaussian_window():
    r = SSIM_WIN // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _filter_valid(x, g):
    n = g.size
    h, w = x.shape
    rows = sum(g[i] * x[i:h - n + 1 + i, :] for i in range(n))
    return sum(g[j] * rows[:, j:w - n + 1 + j] for j in range(n))


def ssim(a, b):
    """Mean SSIM over valid 11x11 Gaussian windows, averaged over channels."""
    a, b = _check_pair(a, b)
    if a.height < SSIM_WIN or a.width < SSIM_WIN:
        raise ValueError(f"SSIM needs at least {SSIM_WIN}x{SSIM_WIN} pixels")
    g = _gaussian_window()
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    vals = []
    for c in range(a.channels):
        x = a.data[:, :, c]
        y = b.data[:, :, c]
        mx = _filter_valid(x, g)
        my = _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(float(np.mean(num / den)))
    return float(np.mean(vals))
