"""Perceptual weight maps.

All maps are computed per channel over 3x3 windows with replicate-edge
padding and lie in [0, 1].
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .image_core import as_image

# below this local mean the relative variance is treated as 0
MEAN_GUARD = 1e-6
# normalized relative variance under this value gets zero weight
ZERO_THRESHOLD = 0.01


@dataclass(frozen=True, eq=False)
class WeightMap:
    weights: np.ndarray  # (H, W, C), values in [0, 1]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 3:
            raise ValueError(f"expected (H, W, C) weights, got {w.shape}")
        object.__setattr__(self, "weights", w)

    @property
    def shape(self):
        return self.weights.shape

    @classmethod
    def constant(cls, shape, value):
        return cls(np.full(shape, float(value)))


def _check_size(img):
    if img.height < 3 or img.width < 3:
        raise ValueError(f"weight maps need at least 3x3 pixels, got {img.height}x{img.width}")


def _normalize_by_max(plane):
    peak = plane.max()
    if peak <= 0.0:
        return np.zeros_like(plane)
    return plane / peak


def relative_variance(plane):
    """Local std / local mean over 3x3 windows, 0 where the mean is ~0."""
    return kernels.box3_relstd(plane, MEAN_GUARD)


def ioi_weights(img):
    """Square root of the max-normalized relative local variance.

    Pixels whose normalized value is below 0.01 get weight 0.
    """
    img = as_image(img)
    _check_size(img)
    out = np.empty(img.shape, dtype=np.float64)
    planes = np.ascontiguousarray(np.moveaxis(img.data, 2, 0))
    for c in range(img.channels):
        g = _normalize_by_max(relative_variance(planes[c]))
        g[g < ZERO_THRESHOLD] = 0.0
        out[:, :, c] = np.sqrt(g, out=g)
    return WeightMap(out)


def nvw_weights(img):
    """Local 3x3 variance normalized by its maximum."""
    img = as_image(img)
    _check_size(img)
    out = np.empty(img.shape, dtype=np.float64)
    for c in range(img.channels):
        _, var = kernels.box3_stats(img.data[:, :, c])
        out[:, :, c] = _normalize_by_max(var)
    return WeightMap(out)


def sobel_weights(img):
    """Sobel gradient magnitude normalized by its maximum."""
    img = as_image(img)
    _check_size(img)
    out = np.empty(img.shape, dtype=np.float64)
    for c in range(img.channels):
        out[:, :, c] = _normalize_by_max(kernels.sobel_magnitude(img.data[:, :, c]))
    return WeightMap(out)


WEIGHT_MAPS = {
    "ioi": ioi_weights,
    "nvw": nvw_weights,
    "sobel": sobel_weights,
}
