# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of ``_kernels_py``. Same names, same signatures, same results."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdint cimport uint64_t
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()

ctypedef fused real:
    float
    double

BACKEND = "cython"


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


def splitmix_bits(seed, counter, Py_ssize_t n):
    cdef uint64_t s = <uint64_t>seed
    cdef uint64_t c = <uint64_t>counter
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = _mix(s + (c + <uint64_t>(i + 1)) * <uint64_t>0x9E3779B97F4A7C15ULL)
    return out


def uniform(seed, counter, Py_ssize_t n):
    cdef uint64_t s = <uint64_t>seed
    cdef uint64_t c = <uint64_t>counter
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = <double>(_mix(s + (c + <uint64_t>(i + 1)) * <uint64_t>0x9E3779B97F4A7C15ULL) >> 11) \
            * (1.0 / 9007199254740992.0)
    return out


def dropout_mask(seed, counter, Py_ssize_t n, double rate, dtype):
    cdef uint64_t s = <uint64_t>seed
    cdef uint64_t c = <uint64_t>counter
    cdef double scale = 1.0 / (1.0 - rate)
    cdef double u
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        u = <double>(_mix(s + (c + <uint64_t>(i + 1)) * <uint64_t>0x9E3779B97F4A7C15ULL) >> 11) \
            * (1.0 / 9007199254740992.0)
        o[i] = scale if u >= rate else 0.0
    return out.astype(dtype, copy=False)


cdef void _softmax_inplace(real[:, ::1] z) noexcept nogil:
    cdef Py_ssize_t i, j, m = z.shape[0], n = z.shape[1]
    cdef real mx, tot
    for i in range(m):
        mx = z[i, 0]
        for j in range(1, n):
            if z[i, j] > mx:
                mx = z[i, j]
        tot = 0
        for j in range(n):
            z[i, j] = exp(z[i, j] - mx)
            tot = tot + z[i, j]
        for j in range(n):
            z[i, j] = z[i, j] / tot


def softmax_rows(real[:, :] x):
    out = np.array(x, copy=True, order="C")
    cdef real[:, ::1] z = out
    _softmax_inplace(z)
    return out


cdef void _softmax_bwd(real[:, ::1] y, real[:, ::1] gy, real[:, ::1] gx) noexcept nogil:
    cdef Py_ssize_t i, j, m = y.shape[0], n = y.shape[1]
    cdef real dot
    for i in range(m):
        dot = 0
        for j in range(n):
            dot = dot + gy[i, j] * y[i, j]
        for j in range(n):
            gx[i, j] = y[i, j] * (gy[i, j] - dot)


def softmax_rows_backward(y, gy):
    y = np.ascontiguousarray(y)
    gy = np.ascontiguousarray(gy, dtype=y.dtype)
    gx = np.empty_like(y)
    if y.dtype == np.float32:
        _softmax_bwd[float](y, gy, gx)
    else:
        _softmax_bwd[double](y, gy, gx)
    return gx


def max_pool_rows(real[:, :] x):
    cdef Py_ssize_t i, j, m = x.shape[0], n = x.shape[1]
    dtype = np.float32 if real is float else np.float64
    out = np.empty(n, dtype=dtype)
    arg = np.zeros(n, dtype=np.intp)
    cdef real[::1] o = out
    cdef Py_ssize_t[::1] a = arg
    for j in range(n):
        o[j] = x[0, j]
    for i in range(1, m):
        for j in range(n):
            # strict comparison keeps the first maximal row
            if x[i, j] > o[j]:
                o[j] = x[i, j]
                a[j] = i
    return out, arg


def max_pool_rows_backward(arg, gout, Py_ssize_t m):
    gx = np.zeros((m, gout.shape[0]), dtype=gout.dtype)
    gx[arg, np.arange(gout.shape[0])] = gout
    return gx


cdef inline void _gemm(char ta, char tb, int M, int N, int K,
                       real* a, int lda, real* b, int ldb, real* c, int ldc) noexcept nogil:
    # column-major gemm: c = op(a) @ op(b)
    cdef float s1 = 1.0, s0 = 0.0
    cdef double d1 = 1.0, d0 = 0.0
    if real is float:
        sgemm(&ta, &tb, &M, &N, &K, &s1, a, &lda, b, &ldb, &s0, c, &ldc)
    else:
        dgemm(&ta, &tb, &M, &N, &K, &d1, a, &lda, b, &ldb, &d0, c, &ldc)


# Row-major products expressed through column-major BLAS via (AB)^T = B^T A^T.

cdef void _gemm_nn(real[:, ::1] a, real[:, ::1] b, real[:, ::1] c) noexcept nogil:
    # c = a @ b
    cdef int m = a.shape[0], K = a.shape[1], n = b.shape[1]
    _gemm(c'N', c'N', n, m, K, &b[0, 0], n, &a[0, 0], K, &c[0, 0], n)


cdef void _gemm_nt(real[:, ::1] a, real[:, ::1] b, real[:, ::1] c) noexcept nogil:
    # c = a @ b.T
    cdef int m = a.shape[0], K = a.shape[1], n = b.shape[0]
    _gemm(c'T', c'N', n, m, K, &b[0, 0], K, &a[0, 0], K, &c[0, 0], n)


cdef void _gemm_tn(real[:, ::1] a, real[:, ::1] b, real[:, ::1] c) noexcept nogil:
    # c = a.T @ b
    cdef int K = a.shape[0], m = a.shape[1], n = b.shape[1]
    _gemm(c'N', c'T', n, m, K, &b[0, 0], n, &a[0, 0], m, &c[0, 0], n)


cdef void _attend(real[:, ::1] q, real[:, ::1] w, real[:, ::1] k, real[:, ::1] v,
                  real[:, ::1] proj, real[:, ::1] g, real[:, ::1] e) noexcept nogil:
    _gemm_nn(q, w, proj)
    _gemm_nt(proj, k, g)
    _softmax_inplace(g)
    _gemm_nn(g, v, e)


def attend(query, w, key, value):
    query = np.ascontiguousarray(query)
    dt = query.dtype
    w = np.ascontiguousarray(w, dtype=dt)
    key = np.ascontiguousarray(key, dtype=dt)
    value = np.ascontiguousarray(value, dtype=dt)
    c, m, l = query.shape[0], key.shape[0], w.shape[1]
    proj = np.empty((c, l), dtype=dt)
    g = np.empty((c, m), dtype=dt)
    e = np.empty((c, value.shape[1]), dtype=dt)
    if dt == np.float32:
        _attend[float](query, w, key, value, proj, g, e)
    else:
        _attend[double](query, w, key, value, proj, g, e)
    return proj, g, e


cdef void _attend_bwd(real[:, ::1] q, real[:, ::1] w, real[:, ::1] k, real[:, ::1] v,
                      real[:, ::1] proj, real[:, ::1] g, real[:, ::1] ge,
                      real[:, ::1] gg, real[:, ::1] gs, real[:, ::1] gproj,
                      real[:, ::1] gq, real[:, ::1] gw, real[:, ::1] gk,
                      real[:, ::1] gv) noexcept nogil:
    _gemm_nt(ge, v, gg)
    _gemm_tn(g, ge, gv)
    _softmax_bwd(g, gg, gs)
    _gemm_nn(gs, k, gproj)
    _gemm_tn(gs, proj, gk)
    _gemm_nt(gproj, w, gq)
    _gemm_tn(q, gproj, gw)


def attend_backward(query, w, key, value, proj, g, ge):
    dt = query.dtype
    query = np.ascontiguousarray(query)
    w = np.ascontiguousarray(w, dtype=dt)
    key = np.ascontiguousarray(key, dtype=dt)
    value = np.ascontiguousarray(value, dtype=dt)
    ge = np.ascontiguousarray(ge, dtype=dt)
    c, m = g.shape[0], g.shape[1]
    gg = np.empty((c, m), dtype=dt)
    gs = np.empty((c, m), dtype=dt)
    gproj = np.empty_like(proj)
    gq = np.empty_like(query)
    gw = np.empty_like(w)
    gk = np.empty_like(key)
    gv = np.empty_like(value)
    if dt == np.float32:
        _attend_bwd[float](query, w, key, value, proj, g, ge, gg, gs, gproj, gq, gw, gk, gv)
    else:
        _attend_bwd[double](query, w, key, value, proj, g, ge, gg, gs, gproj, gq, gw, gk, gv)
    return gq, gw, gk, gv
