# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused LiLAW kernel. Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log, pow

cnp.import_array()


cdef inline double _sigmoid(double z) nogil:
    cdef double e = exp(-fabs(z))
    if z >= 0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


cdef inline double _sigmoid_slope(double z) nogil:
    # sigmoid(z) * sigmoid(-z) without the 1 - sigmoid cancellation
    cdef double e = exp(-fabs(z))
    return e / ((1.0 + e) * (1.0 + e))


def lilaw_terms(s_true, s_max, losses, double alpha, double beta, double delta,
                bint use_alpha, bint use_beta, bint use_delta):
    cdef double[::1] s = np.ascontiguousarray(s_true, dtype=np.float64)
    cdef double[::1] m = np.ascontiguousarray(s_max, dtype=np.float64)
    cdef double[::1] loss = np.ascontiguousarray(losses, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    if m.shape[0] != n or loss.shape[0] != n:
        raise ValueError("s_true, s_max and losses must have equal length")

    wa_arr = np.empty(n, dtype=np.float64)
    wb_arr = np.empty(n, dtype=np.float64)
    wd_arr = np.empty(n, dtype=np.float64)
    w_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] wa = wa_arr
    cdef double[::1] wb = wb_arr
    cdef double[::1] wd = wd_arr
    cdef double[::1] w = w_arr

    cdef double ga = 0.0, gb = 0.0, gd = 0.0
    cdef double za, zb, zd, a, b, d, tot
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            za = alpha * s[i] - m[i]
            zb = beta * s[i] - m[i]
            zd = delta * s[i] - m[i]
            a = _sigmoid(za)
            b = _sigmoid(-zb)
            d = exp(-0.5 * zd * zd)
            wa[i] = a
            wb[i] = b
            wd[i] = d
            tot = 0.0
            if use_alpha:
                tot += a
                ga += loss[i] * _sigmoid_slope(za) * s[i]
            if use_beta:
                tot += b
                gb -= loss[i] * _sigmoid_slope(zb) * s[i]
            if use_delta:
                tot += d
                gd -= loss[i] * d * zd * s[i]
            w[i] = tot
    return wa_arr, wb_arr, wd_arr, w_arr, ga, gb, gd


def softmax_confidence(logits, labels, double focal_gamma):
    cdef double[:, ::1] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = z.shape[0], c = z.shape[1]
    if y.shape[0] != n:
        raise ValueError("one label per row required")
    probs_arr = np.empty((n, c), dtype=np.float64)
    s_arr = np.empty(n, dtype=np.float64)
    m_arr = np.empty(n, dtype=np.float64)
    loss_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] p = probs_arr
    cdef double[::1] s = s_arr
    cdef double[::1] m = m_arr
    cdef double[::1] loss = loss_arr
    cdef Py_ssize_t i, j
    cdef double zmax, tot, pmax, st, nll
    for i in range(n):
        if y[i] < 0 or y[i] >= c:
            raise ValueError("label out of range")
    with nogil:
        for i in range(n):
            zmax = z[i, 0]
            for j in range(1, c):
                if z[i, j] > zmax:
                    zmax = z[i, j]
            tot = 0.0
            for j in range(c):
                p[i, j] = exp(z[i, j] - zmax)
                tot += p[i, j]
            pmax = 0.0
            for j in range(c):
                p[i, j] = p[i, j] / tot
                if p[i, j] > pmax:
                    pmax = p[i, j]
            st = p[i, y[i]]
            s[i] = st
            m[i] = pmax
            nll = -log(st if st > 1e-12 else 1e-12)
            loss[i] = nll if focal_gamma < 0 else pow(1.0 - st, focal_gamma) * nll
    return probs_arr, s_arr, m_arr, loss_arr
