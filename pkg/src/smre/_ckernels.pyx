# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: fused LSTM cell and token-level LCS.

Both kernels write into caller-allocated buffers so the Python side owns
all memory and dtype decisions.
"""
from cython cimport floating
from libc.math cimport exp, expf, tanh, tanhf


cdef inline floating _exp(floating x) noexcept nogil:
    if floating is float:
        return expf(x)
    return exp(x)


cdef inline floating _tanh(floating x) noexcept nogil:
    if floating is float:
        return tanhf(x)
    return tanh(x)


cdef inline floating _sigmoid(floating x) noexcept nogil:
    cdef floating e
    if x >= 0:
        return 1 / (1 + _exp(-x))
    e = _exp(x)
    return e / (1 + e)


def lstm_forward(floating[:, ::1] z, floating[:, ::1] c_prev,
                 floating[:, ::1] hc, floating[:, ::1] gates,
                 floating[:, ::1] tanh_c):
    """Gate layout in ``z`` is [input | forget | cell | output], each H wide."""
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    cdef Py_ssize_t b, k
    cdef floating gi, gf, gg, go, c, tc
    with nogil:
        for b in range(B):
            for k in range(H):
                gi = _sigmoid(z[b, k])
                gf = _sigmoid(z[b, H + k])
                gg = _tanh(z[b, 2 * H + k])
                go = _sigmoid(z[b, 3 * H + k])
                c = gf * c_prev[b, k] + gi * gg
                tc = _tanh(c)
                gates[b, k] = gi
                gates[b, H + k] = gf
                gates[b, 2 * H + k] = gg
                gates[b, 3 * H + k] = go
                tanh_c[b, k] = tc
                hc[b, k] = go * tc
                hc[b, H + k] = c


def lstm_backward(floating[:, ::1] dhc, floating[:, ::1] gates,
                  floating[:, ::1] tanh_c, floating[:, ::1] c_prev,
                  floating[:, ::1] dz, floating[:, ::1] dc_prev):
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    cdef Py_ssize_t b, k
    cdef double gi, gf, gg, go, tc, dh, dc
    with nogil:
        for b in range(B):
            for k in range(H):
                gi = gates[b, k]
                gf = gates[b, H + k]
                gg = gates[b, 2 * H + k]
                go = gates[b, 3 * H + k]
                tc = tanh_c[b, k]
                dh = dhc[b, k]
                dc = dhc[b, H + k] + dh * go * (1.0 - tc * tc)
                dz[b, k] = dc * gg * gi * (1.0 - gi)
                dz[b, H + k] = dc * c_prev[b, k] * gf * (1.0 - gf)
                dz[b, 2 * H + k] = dc * gi * (1.0 - gg * gg)
                dz[b, 3 * H + k] = dh * tc * go * (1.0 - go)
                dc_prev[b, k] = dc * gf


def lcs_length(const long long[::1] a, const long long[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j
    cdef long long[::1] prev
    cdef long long[::1] cur
    cdef long long[::1] tmp
    if n == 0 or m == 0:
        return 0
    import numpy as np
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    with nogil:
        for i in range(n):
            cur[0] = 0
            for j in range(m):
                if a[i] == b[j]:
                    cur[j + 1] = prev[j] + 1
                elif prev[j + 1] >= cur[j]:
                    cur[j + 1] = prev[j + 1]
                else:
                    cur[j + 1] = cur[j]
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[m])
