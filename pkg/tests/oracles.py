"""Independent reference implementations used as test oracles.

These are deliberately slow and direct: explicit sums and exact rationals,
sharing no code with the package.
"""
import cmath
import math
from fractions import Fraction

import numpy as np


def brute_dft2(plane):
    """O(N^4) unnormalized 2D DFT of one plane."""
    h, w = plane.shape
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            acc = 0j
            for y in range(h):
                for x in range(w):
                    acc += plane[y, x] * cmath.exp(-2j * math.pi * (u * y / h + v * x / w))
            out[u, v] = acc
    return out


def _window(plane, i, j):
    h, w = len(plane), len(plane[0])
    return [plane[min(max(i + dy, 0), h - 1)][min(max(j + dx, 0), w - 1)]
            for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def local_variance_exact(plane):
    """3x3 replicate-edge population variance, as exact Fractions."""
    q = [[Fraction(float(v)) for v in row] for row in plane]
    out = []
    for i in range(len(q)):
        row = []
        for j in range(len(q[0])):
            win = _window(q, i, j)
            mean = sum(win) / 9
            row.append(sum(v * v for v in win) / 9 - mean * mean)
        out.append(row)
    return out


def relative_variance_weights(plane, guard=1e-6, threshold=0.01):
    """Scalar weight map: sqrt of max-normalized sigma/mean, zeroed below threshold."""
    q = [[Fraction(float(v)) for v in row] for row in plane]
    var = local_variance_exact(plane)
    h, w = len(q), len(q[0])
    gamma = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            mean = sum(_window(q, i, j)) / 9
            if mean >= Fraction(guard):
                gamma[i][j] = math.sqrt(var[i][j]) / float(mean)
    peak = max(max(r) for r in gamma)
    out = [[0.0] * w for _ in range(h)]
    if peak > 0:
        for i in range(h):
            for j in range(w):
                g = gamma[i][j] / peak
                out[i][j] = math.sqrt(g) if g >= threshold else 0.0
    return out


def sobel_magnitude(plane):
    """Direct 3x3 Sobel with replicate edges."""
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    h, w = len(plane), len(plane[0])
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            gx = gy = 0.0
            for a in range(3):
                for b in range(3):
                    v = plane[min(max(i + a - 1, 0), h - 1)][min(max(j + b - 1, 0), w - 1)]
                    gx += kx[a][b] * v
                    gy += kx[b][a] * v
            out[i][j] = math.hypot(gx, gy)
    return out


def bilinear_point(plane, y, x):
    """Sample a plane at continuous (y, x) with edge clamping."""
    h, w = plane.shape
    y = min(max(y, 0.0), h - 1)
    x = min(max(x, 0.0), w - 1)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = y - y0, x - x0
    top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
    bot = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
    return top * (1 - fy) + bot * fy
