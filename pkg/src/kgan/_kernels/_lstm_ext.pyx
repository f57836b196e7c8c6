# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused LSTM cell kernels (compiled twin of fallback.py)."""

import numpy as np

cimport cython
from libc.math cimport exp, expf, tanh, tanhf


ctypedef fused real:
    float
    double


cdef inline real _exp(real x) noexcept nogil:
    if real is float:
        return expf(x)
    else:
        return exp(x)


cdef inline real _tanh(real x) noexcept nogil:
    if real is float:
        return tanhf(x)
    else:
        return tanh(x)


cdef inline real _sig(real x) noexcept nogil:
    cdef real ex
    if x >= 0:
        return <real>(1.0 / (1.0 + _exp(-x)))
    ex = _exp(x)
    return <real>(ex / (1.0 + ex))


cdef void _forward(real[:, ::1] pre, real[:, ::1] c_prev, real[:, ::1] h_prev,
                   real[::1] mask, real[:, ::1] gates, real[:, ::1] h,
                   real[:, ::1] c, real[:, ::1] tanh_c) noexcept nogil:
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t n = c_prev.shape[1]
    cdef Py_ssize_t b, j
    cdef real i_, f_, o_, g_, cn, tc, m
    for b in range(B):
        m = mask[b]
        for j in range(n):
            i_ = _sig(pre[b, j])
            f_ = _sig(pre[b, n + j])
            o_ = _sig(pre[b, 2 * n + j])
            g_ = _tanh(pre[b, 3 * n + j])
            gates[b, j] = i_
            gates[b, n + j] = f_
            gates[b, 2 * n + j] = o_
            gates[b, 3 * n + j] = g_
            cn = f_ * c_prev[b, j] + i_ * g_
            tc = _tanh(cn)
            tanh_c[b, j] = tc
            h[b, j] = m * (o_ * tc) + (<real>1.0 - m) * h_prev[b, j]
            c[b, j] = m * cn + (<real>1.0 - m) * c_prev[b, j]


cdef void _backward(real[:, ::1] gates, real[:, ::1] tanh_c, real[:, ::1] c_prev,
                    real[::1] mask, real[:, ::1] dh, real[:, ::1] dc,
                    real[:, ::1] dpre, real[:, ::1] dh_prev,
                    real[:, ::1] dc_prev) noexcept nogil:
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t n = c_prev.shape[1]
    cdef Py_ssize_t b, j
    cdef real i_, f_, o_, g_, tc, m, dhn, dcn, do_, df_, di_, dg_
    for b in range(B):
        m = mask[b]
        for j in range(n):
            i_ = gates[b, j]
            f_ = gates[b, n + j]
            o_ = gates[b, 2 * n + j]
            g_ = gates[b, 3 * n + j]
            tc = tanh_c[b, j]
            dhn = dh[b, j] * m
            dh_prev[b, j] = dh[b, j] * (<real>1.0 - m)
            dcn = dc[b, j] * m
            dc_prev[b, j] = dc[b, j] * (<real>1.0 - m)
            do_ = dhn * tc
            dcn = dcn + dhn * o_ * (<real>1.0 - tc * tc)
            df_ = dcn * c_prev[b, j]
            dc_prev[b, j] = dc_prev[b, j] + dcn * f_
            di_ = dcn * g_
            dg_ = dcn * i_
            dpre[b, j] = di_ * i_ * (<real>1.0 - i_)
            dpre[b, n + j] = df_ * f_ * (<real>1.0 - f_)
            dpre[b, 2 * n + j] = do_ * o_ * (<real>1.0 - o_)
            dpre[b, 3 * n + j] = dg_ * (<real>1.0 - g_ * g_)


def cell_forward(pre, c_prev, h_prev, mask):
    gates = np.empty_like(pre)
    h = np.empty_like(c_prev)
    c = np.empty_like(c_prev)
    tanh_c = np.empty_like(c_prev)
    if pre.dtype == np.float64:
        _forward[double](pre, c_prev, h_prev, mask, gates, h, c, tanh_c)
    else:
        _forward[float](pre, c_prev, h_prev, mask, gates, h, c, tanh_c)
    return h, c, gates, tanh_c


def cell_backward(gates, tanh_c, c_prev, mask, dh, dc):
    dpre = np.empty_like(gates)
    dh_prev = np.empty_like(dh)
    dc_prev = np.empty_like(dc)
    if gates.dtype == np.float64:
        _backward[double](gates, tanh_c, c_prev, mask, dh, dc, dpre, dh_prev, dc_prev)
    else:
        _backward[float](gates, tanh_c, c_prev, mask, dh, dc, dpre, dh_prev, dc_prev)
    return dpre, dh_prev, dc_prev
