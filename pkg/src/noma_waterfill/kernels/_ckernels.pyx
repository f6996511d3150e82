# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Mirrors ``_pykernels`` exactly; see there for docs."""

from math import fsum

import numpy as np
cimport numpy as cnp
from libc.math cimport expm1, pow, fabs, INFINITY

cnp.import_array()

cdef double LN2 = 0.6931471805599453


def cluster_constants(const double[::1] h, const double[::1] r):
    cdef Py_ssize_t m = h.shape[0]
    cdef Py_ssize_t k
    cdef double alpha = 1.0, acc = 0.0, keep, beta, total = 0.0
    slopes_arr = np.empty(m)
    intercepts_arr = np.empty(m)
    cdef double[::1] slopes = slopes_arr
    cdef double[::1] intercepts = intercepts_arr

    for k in range(m - 1):
        keep = pow(2.0, -r[k])
        beta = -expm1(-r[k] * LN2)
        slopes[k] = beta * alpha
        intercepts[k] = beta * (1.0 / h[k] - acc)
        acc = keep * acc + beta / h[k]
        alpha *= keep
    slopes[m - 1] = alpha
    intercepts[m - 1] = -acc

    for k in range(m - 1, -1, -1):
        total += expm1(r[k] * LN2) * (total + 1.0 / h[k])
    return slopes_arr, intercepts_arr, alpha, acc, total


cdef double _fill(double level, double[::1] inv_h, const double[::1] lo,
                  const double[::1] hi, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n
    cdef double x, s = 0.0
    for n in range(inv_h.shape[0]):
        x = level - inv_h[n]
        if x < lo[n]:
            x = lo[n]
        elif x > hi[n]:
            x = hi[n]
        out[n] = x
        s += x
    return s


def waterfill_bisect(const double[::1] h_eff, const double[::1] lo, const double[::1] hi,
                     double total, double ws, double eps, int max_iter):
    cdef Py_ssize_t n = h_eff.shape[0], i
    cdef double scale = ws / LN2
    cdef double sum_hi = 0.0, sum_lo = 0.0, top = -INFINITY, bottom = INFINITY, reach = -INFINITY
    cdef double max_h = 0.0, nu_l, nu_h, nu_m, s = 0.0
    cdef int it = 0
    cdef bint converged = False
    inv_arr = np.empty(n)
    q_arr = np.empty(n)
    cdef double[::1] inv_h = inv_arr
    cdef double[::1] q = q_arr

    for i in range(n):
        inv_h[i] = 1.0 / h_eff[i]
        if h_eff[i] > max_h:
            max_h = h_eff[i]
        if hi[i] + inv_h[i] > top:
            top = hi[i] + inv_h[i]
        if inv_h[i] + min(hi[i], lo[i] + total) > reach:
            reach = inv_h[i] + min(hi[i], lo[i] + total)
        if lo[i] + inv_h[i] < bottom:
            bottom = lo[i] + inv_h[i]
    sum_hi = fsum(np.asarray(hi))
    if sum_hi <= total:
        return np.array(hi), scale / top, 0, True, 0.0
    sum_lo = fsum(np.asarray(lo))
    if sum_lo >= total:
        return np.array(lo), scale / bottom, 0, True, ((sum_lo - total) / total if total > 0 else 0.0)

    # at this level every channel holds min(hi, lo + total), which sums to at least total
    nu_l = scale / reach
    nu_h = scale * max_h * 1e6
    while _fill(scale / nu_h, inv_h, lo, hi, q) > total:
        nu_h *= 2.0
    while _fill(scale / nu_l, inv_h, lo, hi, q) < total:
        nu_l *= 0.5

    nu_m = nu_l
    for it in range(1, max_iter + 1):
        nu_m = 0.5 * (nu_l + nu_h)
        s = _fill(scale / nu_m, inv_h, lo, hi, q)
        if s < total:
            nu_h = nu_m
        else:
            nu_l = nu_m
        if fabs(total - s) <= eps * total:
            converged = True
            break
    return q_arr, nu_m, it, converged, fabs(total - s) / total


def greedy_assign(const double[:, ::1] cnr, long cap):
    cdef Py_ssize_t k_users = cnr.shape[0], n_sub = cnr.shape[1]
    cdef Py_ssize_t k, n, best
    cdef long remaining = k_users
    cdef double best_val
    cdef bint progressed
    assign_arr = np.full(k_users, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] assign = assign_arr
    sizes_arr = np.zeros(n_sub, dtype=np.int64)
    cdef cnp.int64_t[::1] sizes = sizes_arr

    while remaining > 0:
        progressed = False
        for n in range(n_sub):
            if remaining == 0:
                break
            if sizes[n] >= cap:
                continue
            best = -1
            best_val = -INFINITY
            for k in range(k_users):
                if assign[k] < 0 and cnr[k, n] > best_val:
                    best = k
                    best_val = cnr[k, n]
            assign[best] = n
            sizes[n] += 1
            remaining -= 1
            progressed = True
        if not progressed:
            raise ValueError("subchannel capacity exhausted before all users were assigned")
    return assign_arr
