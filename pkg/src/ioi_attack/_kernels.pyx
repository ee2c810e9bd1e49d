# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 3x3 stencil kernels.

Mirrors ``_kernels_py`` function for function. Window statistics follow the
same accumulation order as the numpy version.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, log1p

cnp.import_array()


cdef inline Py_ssize_t _clip(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


def box3_stats(x):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1]
    mean_arr = np.empty((h, w), dtype=np.float64)
    var_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] mv = mean_arr
    cdef double[:, ::1] vv = var_arr
    cdef Py_ssize_t i, j, dy, dx
    cdef double xc, v, d, s, sd, sd2, dm, var
    with nogil:
        for i in range(h):
            for j in range(w):
                xc = xv[i, j]
                s = 0.0
                sd = 0.0
                sd2 = 0.0
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        v = xv[_clip(i + dy, h), _clip(j + dx, w)]
                        d = v - xc
                        s = s + v
                        sd = sd + d
                        sd2 = sd2 + d * d
                mv[i, j] = s / 9.0
                dm = sd / 9.0
                var = sd2 / 9.0 - dm * dm
                if var < 0.0:
                    var = 0.0
                vv[i, j] = var
    return mean_arr, var_arr


cdef inline double _relstd_at(const double[:, ::1] xv, Py_ssize_t i, Py_ssize_t j,
                              Py_ssize_t h, Py_ssize_t w, double guard) noexcept nogil:
    cdef Py_ssize_t dy, dx
    cdef double xc = xv[i, j], v, d, s = 0.0, sd = 0.0, sd2 = 0.0, dm, var, mean
    for dy in range(-1, 2):
        for dx in range(-1, 2):
            v = xv[_clip(i + dy, h), _clip(j + dx, w)]
            d = v - xc
            s = s + v
            sd = sd + d
            sd2 = sd2 + d * d
    mean = s / 9.0
    if mean < guard:
        return 0.0
    dm = sd / 9.0
    var = sd2 / 9.0 - dm * dm
    if var < 0.0:
        var = 0.0
    return sqrt(var) / mean


def box3_relstd(x, double guard):
    """Local std / local mean over 3x3 windows; 0 where the mean < guard."""
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1]
    out = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef const double *r0
    cdef const double *r1
    cdef const double *r2
    cdef double xc, v, d, s, sd, sd2, dm, var, mean
    with nogil:
        for i in range(h):
            if i == 0 or i == h - 1 or w < 3:
                for j in range(w):
                    ov[i, j] = _relstd_at(xv, i, j, h, w, guard)
                continue
            ov[i, 0] = _relstd_at(xv, i, 0, h, w, guard)
            ov[i, w - 1] = _relstd_at(xv, i, w - 1, h, w, guard)
            r0 = &xv[i - 1, 0]
            r1 = &xv[i, 0]
            r2 = &xv[i + 1, 0]
            # interior: same taps and summation order as _relstd_at, no clipping
            for j in range(1, w - 1):
                xc = r1[j]
                s = 0.0
                sd = 0.0
                sd2 = 0.0
                v = r0[j - 1]; d = v - xc; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                v = r0[j]; d = v - xc; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                v = r0[j + 1]; d = v - xc; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                v = r1[j - 1]; d = v - xc; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                v = xc; d = 0.0; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                v = r1[j + 1]; d = v - xc; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                v = r2[j - 1]; d = v - xc; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                v = r2[j]; d = v - xc; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                v = r2[j + 1]; d = v - xc; s = s + v; sd = sd + d; sd2 = sd2 + d * d
                mean = s / 9.0
                if mean < guard:
                    ov[i, j] = 0.0
                    continue
                dm = sd / 9.0
                var = sd2 / 9.0 - dm * dm
                if var < 0.0:
                    var = 0.0
                ov[i, j] = sqrt(var) / mean
    return out


def sobel_magnitude(x):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1]
    out = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, im, ip, jm, jp
    cdef double left, right, top, bottom, gx, gy
    with nogil:
        for i in range(h):
            im = _clip(i - 1, h)
            ip = _clip(i + 1, h)
            for j in range(w):
                jm = _clip(j - 1, w)
                jp = _clip(j + 1, w)
                left = xv[im, jm] + 2.0 * xv[i, jm] + xv[ip, jm]
                right = xv[im, jp] + 2.0 * xv[i, jp] + xv[ip, jp]
                top = xv[im, jm] + 2.0 * xv[im, j] + xv[im, jp]
                bottom = xv[ip, jm] + 2.0 * xv[ip, j] + xv[ip, jp]
                gx = right - left
                gy = bottom - top
                ov[i, j] = sqrt(gx * gx + gy * gy)
    return out


def laplace_valid(x):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1]
    out = np.empty((h - 2, w - 2), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(1, h - 1):
            for j in range(1, w - 1):
                ov[i - 1, j - 1] = (xv[i - 1, j] + xv[i + 1, j] + xv[i, j - 1]
                                    + xv[i, j + 1] - 4.0 * xv[i, j])
    return out


def laplace_adjoint(g, Py_ssize_t h, Py_ssize_t w):
    cdef const double[:, ::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    out = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double t
    with nogil:
        for i in range(h - 2):
            for j in range(w - 2):
                t = gv[i, j]
                ov[i, j + 1] += t
                ov[i + 2, j + 1] += t
                ov[i + 1, j] += t
                ov[i + 1, j + 2] += t
                ov[i + 1, j + 1] -= 4.0 * t
    return out


def _pack_weights(weights):
    # (K, C, 3, 3) -> (3*3*C, K): tap-major so each tap updates all filters
    k = weights.shape[0]
    if k > 32:
        raise ValueError("at most 32 filters supported")
    return np.ascontiguousarray(
        np.transpose(weights, (2, 3, 1, 0)).reshape(-1, k), dtype=np.float64)


cdef double _conv_pass(const double[:, :, ::1] xv, const double[:, ::1] wv, const double[::1] bv,
                       Py_ssize_t stride, double[:, :, ::1] gv, bint want_grad) noexcept nogil:
    """Sum of softplus activations; optionally scatters d(sum)/dx into ``gv``."""
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1], c = xv.shape[2]
    cdef Py_ssize_t k = wv.shape[1], taps = 9 * c
    cdef Py_ssize_t i, j, kk, t, dy, rowlen = 3 * c
    cdef double patch[27]
    cdef double z[32]
    cdef double sg[32]
    cdef double e, acc, pv, total = 0.0, row
    cdef const double *wt
    cdef const double *src
    cdef double *dst
    i = 0
    while i + 2 < h:
        row = 0.0
        j = 0
        while j + 2 < w:
            for dy in range(3):
                src = &xv[i + dy, j, 0]
                for t in range(rowlen):
                    patch[dy * rowlen + t] = src[t]
            for kk in range(k):
                z[kk] = bv[kk]
            for t in range(taps):
                pv = patch[t]
                wt = &wv[t, 0]
                for kk in range(k):
                    z[kk] = z[kk] + wt[kk] * pv
            # one exp shared by softplus and sigmoid
            for kk in range(k):
                if z[kk] > 0.0:
                    e = exp(-z[kk])
                    row = row + z[kk] + log1p(e)
                    sg[kk] = 1.0 / (1.0 + e)
                else:
                    e = exp(z[kk])
                    row = row + log1p(e)
                    sg[kk] = e / (1.0 + e)
            if want_grad:
                for dy in range(3):
                    dst = &gv[i + dy, j, 0]
                    for t in range(rowlen):
                        wt = &wv[dy * rowlen + t, 0]
                        acc = 0.0
                        for kk in range(k):
                            acc = acc + sg[kk] * wt[kk]
                        dst[t] = dst[t] + acc
            j += stride
        total = total + row
        i += stride
    return total


def _out_size(n, stride):
    return (n - 3) // stride + 1


def conv_softplus_mean(x, weights, bias, Py_ssize_t stride=1):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] wv = _pack_weights(weights)
    cdef const double[::1] bv = np.ascontiguousarray(bias, dtype=np.float64)
    if xv.shape[2] > 3:
        raise ValueError("at most 3 channels supported")
    cdef double n = _out_size(xv.shape[0], stride) * _out_size(xv.shape[1], stride) * wv.shape[1]
    cdef double[:, :, ::1] dummy = np.zeros((1, 1, 1), dtype=np.float64)
    cdef double total
    with nogil:
        total = _conv_pass(xv, wv, bv, stride, dummy, False)
    return total / n


def conv_softplus_mean_grad(x, weights, bias, Py_ssize_t stride=1):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] wv = _pack_weights(weights)
    cdef const double[::1] bv = np.ascontiguousarray(bias, dtype=np.float64)
    if xv.shape[2] > 3:
        raise ValueError("at most 3 channels supported")
    cdef double n = _out_size(xv.shape[0], stride) * _out_size(xv.shape[1], stride) * wv.shape[1]
    grad = np.zeros((xv.shape[0], xv.shape[1], xv.shape[2]), dtype=np.float64)
    cdef double[:, :, ::1] gv = grad
    cdef double total
    with nogil:
        total = _conv_pass(xv, wv, bv, stride, gv, True)
    grad /= n
    return total / n, grad
