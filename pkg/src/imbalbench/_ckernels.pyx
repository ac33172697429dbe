# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``."""

import numpy as np

from libc.math cimport exp, log, pow, floor, sqrt, NAN

cdef double EPS = 1e-12


def softmax_rows(logits):
    cdef const double[:, ::1] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], c = z.shape[1], i, j
    out = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] p = out
    cdef double m, s
    with nogil:
        for i in range(n):
            m = z[i, 0]
            for j in range(1, c):
                if z[i, j] > m:
                    m = z[i, j]
            s = 0.0
            for j in range(c):
                p[i, j] = exp(z[i, j] - m)
                s += p[i, j]
            for j in range(c):
                p[i, j] = p[i, j] / s
    return out


def loss_grad(logits, labels, class_coef, double gamma):
    cdef const double[:, ::1] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const long long[::1] t = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(class_coef, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], c = z.shape[1], i, j, k
    losses_arr = np.empty(n, dtype=np.float64)
    grad_arr = np.empty((n, c), dtype=np.float64)
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] g = grad_arr
    cdef double m, s, pt, nll, q, mod, scale, coef
    with nogil:
        for i in range(n):
            k = t[i]
            m = z[i, 0]
            for j in range(1, c):
                if z[i, j] > m:
                    m = z[i, j]
            s = 0.0
            for j in range(c):
                g[i, j] = exp(z[i, j] - m)
                s += g[i, j]
            for j in range(c):
                g[i, j] = g[i, j] / s
            pt = g[i, k]
            nll = -log(pt if pt > EPS else EPS)
            coef = w[k]
            if gamma == 0.0:
                losses[i] = coef * nll
                scale = coef
            else:
                q = 1.0 - pt
                mod = pow(q, gamma)
                losses[i] = coef * (mod * nll)
                if q > 0.0:
                    scale = coef * (mod - gamma * pt * pow(q, gamma - 1.0) * (-nll))
                else:
                    scale = 0.0
            g[i, k] -= 1.0
            for j in range(c):
                g[i, j] = g[i, j] * scale
    return losses_arr, grad_arr


def rotate_nearest(raster, double cos_t, double sin_t, double fill):
    cdef const double[:, :, ::1] r = np.ascontiguousarray(raster, dtype=np.float64)
    cdef Py_ssize_t h = r.shape[0], w = r.shape[1], kc = r.shape[2]
    cdef Py_ssize_t i, j, ch, si, sj
    out_arr = np.empty((h, w, kc), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0
    cdef double x, y, sx, sy
    with nogil:
        for i in range(h):
            for j in range(w):
                x = j - cx
                y = cy - i
                sx = x * cos_t + y * sin_t
                sy = y * cos_t - x * sin_t
                sj = <Py_ssize_t>floor(sx + cx + 0.5)
                si = <Py_ssize_t>floor(cy - sy + 0.5)
                if 0 <= si < h and 0 <= sj < w:
                    for ch in range(kc):
                        out[i, j, ch] = r[si, sj, ch]
                else:
                    for ch in range(kc):
                        out[i, j, ch] = fill
    return out_arr


def confusion_counts(preds, labels, Py_ssize_t n_classes):
    cdef const long long[::1] p = np.ascontiguousarray(preds, dtype=np.int64)
    cdef const long long[::1] t = np.ascontiguousarray(labels, dtype=np.int64)
    out_arr = np.zeros((n_classes, n_classes), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(p.shape[0]):
            out[t[i], p[i]] += 1
    return out_arr


def paired_cosine(x, y):
    cdef const double[:, ::1] a = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], d = a.shape[1], i, j
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double dot, na, nb, denom, v
    with nogil:
        for i in range(n):
            dot = 0.0
            na = 0.0
            nb = 0.0
            for j in range(d):
                dot += a[i, j] * b[i, j]
                na += a[i, j] * a[i, j]
                nb += b[i, j] * b[i, j]
            denom = sqrt(na) * sqrt(nb)
            if denom > 0.0:
                v = dot / denom
                if v > 1.0:
                    v = 1.0
                elif v < -1.0:
                    v = -1.0
                out[i] = v
            else:
                out[i] = NAN
    return out_arr
