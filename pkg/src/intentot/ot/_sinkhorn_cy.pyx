"""Cython log-domain Sinkhorn kernel (hot loop of the relabeling pass)."""

from libc.math cimport exp, isfinite, log

import numpy as np


cdef inline double _lse_row(double[:, ::1] cost, double[::1] g,
                            double inv_eps, Py_ssize_t i, Py_ssize_t m) nogil:
    # logsumexp_j((g[j] - C[i, j]) / eps) with max subtraction
    cdef double hi = -1e308
    cdef double v, acc
    cdef Py_ssize_t j
    for j in range(m):
        v = (g[j] - cost[i, j]) * inv_eps
        if v > hi:
            hi = v
    acc = 0.0
    for j in range(m):
        acc += exp((g[j] - cost[i, j]) * inv_eps - hi)
    return hi + log(acc)


cdef inline double _lse_col(double[:, ::1] cost, double[::1] f,
                            double inv_eps, Py_ssize_t j, Py_ssize_t n) nogil:
    cdef double hi = -1e308
    cdef double v, acc
    cdef Py_ssize_t i
    for i in range(n):
        v = (f[i] - cost[i, j]) * inv_eps
        if v > hi:
            hi = v
    acc = 0.0
    for i in range(n):
        acc += exp((f[i] - cost[i, j]) * inv_eps - hi)
    return hi + log(acc)


def sinkhorn_duals(double[:, ::1] cost, double[::1] log_a, double[::1] log_b,
                   double eps, int max_iters, double tol,
                   f0=None, g0=None):
    """Alternating dual updates; same contract as the NumPy fallback."""
    cdef Py_ssize_t n = cost.shape[0]
    cdef Py_ssize_t m = cost.shape[1]
    f_arr = np.zeros(n) if f0 is None else np.array(f0, dtype=np.float64)
    g_arr = np.zeros(m) if g0 is None else np.array(g0, dtype=np.float64)
    cdef double[::1] f = f_arr
    cdef double[::1] g = g_arr
    cdef double inv_eps = 1.0 / eps
    cdef double err = float("inf")
    cdef int iters = 0
    cdef int it
    cdef Py_ssize_t i, j
    cdef double hi, acc, dev, a_i, b_j
    cdef bint ok

    for it in range(1, max_iters + 1):
        for i in range(n):
            f[i] = eps * (log_a[i] - _lse_row(cost, g, inv_eps, i, m))
        for j in range(m):
            g[j] = eps * (log_b[j] - _lse_col(cost, f, inv_eps, j, n))
        ok = True
        for i in range(n):
            if not isfinite(f[i]):
                ok = False
        for j in range(m):
            if not isfinite(g[j]):
                ok = False
        if not ok:
            raise FloatingPointError(f"non-finite dual at iteration {it}")

        # max deviation of row/column plan sums from the target marginals
        err = 0.0
        for i in range(n):
            hi = -1e308
            for j in range(m):
                acc = (f[i] + g[j] - cost[i, j]) * inv_eps
                if acc > hi:
                    hi = acc
            acc = 0.0
            for j in range(m):
                acc += exp((f[i] + g[j] - cost[i, j]) * inv_eps - hi)
            a_i = exp(log_a[i])
            dev = exp(hi) * acc - a_i
            if dev < 0.0:
                dev = -dev
            if dev > err:
                err = dev
        for j in range(m):
            hi = -1e308
            for i in range(n):
                acc = (f[i] + g[j] - cost[i, j]) * inv_eps
                if acc > hi:
                    hi = acc
            acc = 0.0
            for i in range(n):
                acc += exp((f[i] + g[j] - cost[i, j]) * inv_eps - hi)
            b_j = exp(log_b[j])
            dev = exp(hi) * acc - b_j
            if dev < 0.0:
                dev = -dev
            if dev > err:
                err = dev
        iters = it
        if err <= tol:
            break
    return f_arr, g_arr, iters, err
