# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sin, sqrt, fmax, fmin

cnp.import_array()

DEF SIGMOID = 0
DEF RADIAL_BASIS = 1
DEF SINE = 2
DEF EXPONENTIAL = 3


cdef inline double _act(double z, int kind) noexcept nogil:
    cdef double e
    if kind == SIGMOID:
        if z >= 0:
            return 1.0 / (1.0 + exp(-z))
        e = exp(z)
        return e / (1.0 + e)
    elif kind == RADIAL_BASIS:
        return exp(-z * z)
    elif kind == SINE:
        return sin(z)
    else:
        return exp(fmin(fmax(z, -745.0), 709.0))


def hidden_matrix(X, W, b, offset, scale, int kind):
    if kind < 0 or kind > 3:
        raise ValueError(f"unknown activation code {kind}")
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef const double[::1] bias = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[::1] off = np.ascontiguousarray(offset, dtype=np.float64)
    cdef const double[::1] sc = np.ascontiguousarray(scale, dtype=np.float64)
    cdef Py_ssize_t N = x.shape[0], n = x.shape[1], L = w.shape[0]
    cdef Py_ssize_t i, j, d
    cdef double z
    out = np.empty((N, L), dtype=np.float64)
    cdef double[:, ::1] H = out
    cdef double[::1] xs = np.empty(n, dtype=np.float64)
    with nogil:
        for i in range(N):
            for d in range(n):
                xs[d] = (x[i, d] - off[d]) / sc[d]
            for j in range(L):
                z = bias[j]
                for d in range(n):
                    z = z + w[j, d] * xs[d]
                H[i, j] = _act(z, kind)
    return out


def switching_statistic(X, int order, double floor):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t T = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t K = T - 1
    cdef Py_ssize_t i, j, d, r
    # difference in place; cur row i becomes Delta^r x(i) for i >= r
    work = np.array(x, dtype=np.float64)
    cdef double[:, ::1] cur = work
    prev_arr = np.array(x, dtype=np.float64)
    cdef double[:, ::1] prev = prev_arr
    for r in range(1, order + 1):
        if r == order:
            prev[:, :] = cur
        for i in range(T - 1, r - 1, -1):
            for d in range(n):
                cur[i, d] = cur[i, d] - cur[i - 1, d]
    # prev holds Delta^(order-1) at rows >= order-1; cur holds Delta^order at rows >= order
    out = np.empty(K - order, dtype=np.float64)
    cdef double[::1] s = out
    cdef double num, den, t
    with nogil:
        for j in range(K - order):
            i = j + order
            num = 0.0
            den = 0.0
            for d in range(n):
                t = cur[i + 1, d] - cur[i, d]
                num = num + t * t
                den = den + prev[i, d] * prev[i, d]
            s[j] = sqrt(num) / fmax(sqrt(den), floor)
    return out


def affine_recurrence(F, g, modes, x0):
    cdef const double[:, :, ::1] f = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[:, ::1] gg = np.ascontiguousarray(g, dtype=np.float64)
    cdef const Py_ssize_t[::1] md = np.ascontiguousarray(modes, dtype=np.intp)
    cdef Py_ssize_t K = md.shape[0], n = f.shape[1]
    cdef Py_ssize_t k, i, j, m
    cdef double acc
    out = np.empty((K + 1, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    out[0] = x0
    with nogil:
        for k in range(K):
            m = md[k]
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc = acc + f[m, i, j] * o[k, j]
                o[k + 1, i] = acc + gg[m, i]
    return out


def elm_rollout(W, b, offset, scale, int kind, betas, modes, x0, U):
    if kind < 0 or kind > 3:
        raise ValueError(f"unknown activation code {kind}")
    cdef const double[:, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef const double[::1] bias = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[::1] off = np.ascontiguousarray(offset, dtype=np.float64)
    cdef const double[::1] sc = np.ascontiguousarray(scale, dtype=np.float64)
    cdef const double[:, :, ::1] beta = np.ascontiguousarray(betas, dtype=np.float64)
    cdef const Py_ssize_t[::1] md = np.ascontiguousarray(modes, dtype=np.intp)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t K = md.shape[0], L = w.shape[0], n = w.shape[1]
    cdef Py_ssize_t nx = beta.shape[2], nu = u.shape[1]
    cdef Py_ssize_t k, j, d, m
    cdef double z, hj
    out = np.empty((K + 1, nx), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] zs = np.empty(n, dtype=np.float64)
    out[0] = x0
    with nogil:
        for k in range(K):
            m = md[k]
            for d in range(nx):
                zs[d] = (o[k, d] - off[d]) / sc[d]
            for d in range(nu):
                zs[nx + d] = (u[k, d] - off[nx + d]) / sc[nx + d]
            for d in range(nx):
                o[k + 1, d] = 0.0
            for j in range(L):
                z = bias[j]
                for d in range(n):
                    z = z + w[j, d] * zs[d]
                hj = _act(z, kind)
                for d in range(nx):
                    o[k + 1, d] = o[k + 1, d] + hj * beta[m, j, d]
    return out
