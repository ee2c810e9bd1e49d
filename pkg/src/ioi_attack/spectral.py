"""2D Fourier analysis: transforms, top-f coefficient masks, LF/HF split, MAE*.

Transforms are per channel over axes (0, 1): the forward transform is
unnormalized and the inverse carries the 1/(HW) factor. Sums over
coefficients use numpy's pairwise summation in row-major order, which does
not depend on how channels or frames are scheduled.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .image_core import Image, as_image

log = logging.getLogger(__name__)

IMAG_RESIDUE_WARN = 1e-6


@dataclass(frozen=True, eq=False)
class Spectrum:
    coeffs: np.ndarray  # (H, W, C) complex128

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != 3:
            raise ValueError(f"expected (H, W, C) coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def shape(self):
        return self.coeffs.shape

    @property
    def height(self):
        return self.coeffs.shape[0]

    @property
    def width(self):
        return self.coeffs.shape[1]

    @property
    def channels(self):
        return self.coeffs.shape[2]


@dataclass(frozen=True, eq=False)
class FreqIndexSet:
    """Per-channel mask of retained (low-frequency) coefficient indices."""

    mask: np.ndarray  # (H, W, C) bool
    fraction: float

    @property
    def shape(self):
        return self.mask.shape


def fft2(img):
    return Spectrum(scipy.fft.fft2(as_image(img).data, axes=(0, 1)))


def ifft2(spec):
    """Real part of the normalized inverse transform, as an Image.

    A non-negligible imaginary residue means the spectrum was not
    conjugate-symmetric; it is logged and dropped.
    """
    z = scipy.fft.ifft2(spec.coeffs, axes=(0, 1))
    residue = float(np.abs(z.imag).max()) if z.size else 0.0
    if residue > IMAG_RESIDUE_WARN:
        log.debug("ifft2: dropped imaginary residue %.3g", residue)
    return Image(z.real)


def retained_count(f, height, width):
    """Number of coefficients kept for fraction ``f``: round-half-up of f*H*W."""
    return int(math.floor(f * height * width + 0.5))


def _check_fraction(f):
    if not 0.0 < f < 1.0:
        raise ValueError(f"fraction f must lie in (0, 1), got {f}")


def _conj_index(n):
    # index of -u modulo n
    return (-np.arange(n)) % n


def hermitian_magnitude(coeffs):
    """|X| averaged with its conjugate partner |X[-u, -v]|.

    For a real image the two are equal in exact arithmetic; averaging makes
    them bitwise equal so the tie-break treats a conjugate pair as a tie.
    """
    mag = np.abs(coeffs)
    h, w = mag.shape[:2]
    partner = mag[_conj_index(h)][:, _conj_index(w)]
    return 0.5 * (mag + partner)


def topk_mask(magnitude, k):
    """Boolean mask of the ``k`` largest entries of a 2D array.

    Ties go to the lower row-major index.
    """
    flat = magnitude.ravel()
    n = flat.size
    mask = np.zeros(n, dtype=bool)
    if k <= 0:
        return mask.reshape(magnitude.shape)
    if k >= n:
        mask[:] = True
        return mask.reshape(magnitude.shape)
    kth = np.partition(flat, n - k)[n - k]
    above = flat > kth
    mask[above] = True
    need = k - int(np.count_nonzero(above))
    ties = np.flatnonzero(flat == kth)
    mask[ties[:need]] = True
    return mask.reshape(magnitude.shape)


def select_topf(spec_of_original, f):
    """Mask of the round(f*H*W) largest-magnitude coefficients, per channel."""
    _check_fraction(f)
    coeffs = spec_of_original.coeffs
    h, w, c = coeffs.shape
    k = retained_count(f, h, w)
    mask = np.empty((h, w, c), dtype=bool)
    for ch in range(c):
        mask[:, :, ch] = topk_mask(hermitian_magnitude(coeffs[:, :, ch]), k)
    return FreqIndexSet(mask, float(f))


def split_lf_hf(spec, idx):
    """Split ``spec`` into the retained (LF) and residual (HF) coefficients."""
    if spec.shape != idx.shape:
        raise ValueError(f"index set shape {idx.shape} does not match spectrum {spec.shape}")
    lf = np.where(idx.mask, spec.coeffs, 0.0)
    hf = np.where(idx.mask, 0.0, spec.coeffs)
    return Spectrum(lf), Spectrum(hf)


def _check_same(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mae_star(a, b):
    """Mean absolute difference of FFT coefficients, averaged over channels."""
    a, b = as_image(a), as_image(b)
    _check_same(a, b)
    h, w, _ = a.shape
    diff = scipy.fft.fft2(a.data - b.data, axes=(0, 1))
    per_channel = np.abs(diff).sum(axis=(0, 1)) / (h * w)
    return float(per_channel.mean())


# Half-spectrum helpers used by the attack pipeline. A real plane's full
# spectrum is recovered from rfft2 output through X[u, v] = conj(X[-u, -v]).

def half_weights(width):
    """Multiplicity of each rfft column in the full spectrum."""
    nh = width // 2 + 1
    wts = np.full(nh, 2.0)
    wts[0] = 1.0
    if width % 2 == 0:
        wts[-1] = 1.0
    return wts


def full_magnitude_from_half(half, width):
    """Full (H, W) Hermitian-exact magnitude grid from an rfft2 plane."""
    h = half.shape[0]
    nh = half.shape[1]
    mag_half = np.abs(half)
    rows = _conj_index(h)
    # columns 0 and W/2 hold both members of their conjugate pairs
    mag_half[:, 0] = 0.5 * (mag_half[:, 0] + mag_half[rows, 0])
    if width % 2 == 0:
        mag_half[:, nh - 1] = 0.5 * (mag_half[:, nh - 1] + mag_half[rows, nh - 1])
    full = np.empty((h, width), dtype=np.float64)
    full[:, :nh] = mag_half
    # v in (W/2, W): partner column W - v, partner row -u
    tail = np.arange(nh, width)
    full[:, nh:] = mag_half[rows][:, width - tail]
    return full


def symmetric_half_mask(mask_full):
    """Average of a full mask and its point reflection, on rfft columns."""
    h, w = mask_full.shape
    nh = w // 2 + 1
    m = mask_full[:, :nh].astype(np.float64)
    reflected = mask_full[_conj_index(h)][:, _conj_index(w)[:nh]]
    m += reflected
    m *= 0.5
    return m
