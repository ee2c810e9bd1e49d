"""Pure numpy versions of the 3x3 stencil kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and the same summation order, so both back-ends agree to the last bit on
the window statistics and to rounding error on the network kernels.
"""
import numpy as np

# row-major window offsets; both back-ends accumulate in this order
_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def box3_stats(x):
    """Local mean and population variance over replicate-padded 3x3 windows.

    The variance is accumulated on values shifted by the window centre, so a
    window of identical values gives exactly zero.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    h, w = x.shape
    p = np.pad(x, 1, mode="edge")
    s = np.zeros_like(x)
    sd = np.zeros_like(x)
    sd2 = np.zeros_like(x)
    for dy, dx in _OFFSETS:
        v = p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        d = v - x
        s += v
        sd += d
        sd2 += d * d
    mean = s / 9.0
    dm = sd / 9.0
    var = sd2 / 9.0 - dm * dm
    np.maximum(var, 0.0, out=var)
    return mean, var


def box3_relstd(x, guard):
    """Local std / local mean over 3x3 windows; 0 where the mean < guard."""
    mean, var = box3_stats(x)
    out = np.zeros_like(mean)
    ok = mean >= guard
    out[ok] = np.sqrt(var[ok]) / mean[ok]
    return out


def sobel_magnitude(x):
    """Gradient magnitude from 3x3 Sobel kernels with replicate padding."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    h, w = x.shape
    p = np.pad(x, 1, mode="edge")
    # vertical [1, 2, 1] smoothing of the left/right columns, then difference
    left = p[0:h, 0:w] + 2.0 * p[1:h + 1, 0:w] + p[2:h + 2, 0:w]
    right = p[0:h, 2:w + 2] + 2.0 * p[1:h + 1, 2:w + 2] + p[2:h + 2, 2:w + 2]
    top = p[0:h, 0:w] + 2.0 * p[0:h, 1:w + 1] + p[0:h, 2:w + 2]
    bottom = p[2:h + 2, 0:w] + 2.0 * p[2:h + 2, 1:w + 1] + p[2:h + 2, 2:w + 2]
    gx = right - left
    gy = bottom - top
    return np.sqrt(gx * gx + gy * gy)


def laplace_valid(x):
    """5-point Laplacian on the interior (output is (H-2, W-2))."""
    x = np.asarray(x, dtype=np.float64)
    return (x[:-2, 1:-1] + x[2:, 1:-1] + x[1:-1, :-2] + x[1:-1, 2:]
            - 4.0 * x[1:-1, 1:-1])


def laplace_adjoint(g, h, w):
    """Transpose of :func:`laplace_valid`: scatter ``g`` back to (h, w)."""
    g = np.asarray(g, dtype=np.float64)
    out = np.zeros((h, w), dtype=np.float64)
    out[:-2, 1:-1] += g
    out[2:, 1:-1] += g
    out[1:-1, :-2] += g
    out[1:-1, 2:] += g
    out[1:-1, 1:-1] -= 4.0 * g
    return out


def _softplus_sigmoid(z):
    # one exp shared by both, matching the compiled kernel
    e = np.exp(-np.abs(z))
    sp = np.maximum(z, 0.0) + np.log1p(e)
    sig = np.where(z > 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return sp, sig


def _out_size(n, stride):
    return (n - 3) // stride + 1


def _preactivations(x, weights, bias, stride):
    h, w, c = x.shape
    k = weights.shape[0]
    ho, wo = _out_size(h, stride), _out_size(w, stride)
    z = np.broadcast_to(bias, (ho * wo, k)).copy()
    for dy in range(3):
        for dx in range(3):
            tap = x[dy:dy + stride * (ho - 1) + 1:stride,
                    dx:dx + stride * (wo - 1) + 1:stride, :].reshape(ho * wo, c)
            z += tap @ weights[:, :, dy, dx].T
    return z, ho, wo


def conv_softplus_mean(x, weights, bias, stride=1):
    """Mean of softplus(3x3 conv(x) + bias) over output positions and filters.

    ``x`` is (H, W, C); ``weights`` is (K, C, 3, 3); ``bias`` is (K,). No
    padding; windows start at multiples of ``stride``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[2] > 3:
        raise ValueError("at most 3 channels supported")
    z, _, _ = _preactivations(x, weights, bias, stride)
    sp, _ = _softplus_sigmoid(z)
    return float(sp.mean())


def conv_softplus_mean_grad(x, weights, bias, stride=1):
    """Value of :func:`conv_softplus_mean` and its gradient w.r.t. ``x``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[2] > 3:
        raise ValueError("at most 3 channels supported")
    c = x.shape[2]
    z, ho, wo = _preactivations(x, weights, bias, stride)
    sp, sig = _softplus_sigmoid(z)
    gz = sig / z.size
    grad = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            tap = (gz @ weights[:, :, dy, dx]).reshape(ho, wo, c)
            grad[dy:dy + stride * (ho - 1) + 1:stride,
                 dx:dx + stride * (wo - 1) + 1:stride, :] += tap
    return float(sp.mean()), grad
