# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled message-passing inner loops (see _kernels_py for the numpy twin)."""

import numpy as np
from libc.math cimport exp, log, isfinite, INFINITY
from numpy cimport int64_t

cdef double UNDERFLOW_LIMIT = 1e-300


cdef int _log_product(const double[::1] prior, const double[:, ::1] b,
                      Py_ssize_t e0, Py_ssize_t e1, Py_ssize_t skip,
                      double[::1] out) noexcept nogil:
    """Normalized exp(log prior + sum of log b over [e0, e1) except ``skip``)."""
    cdef Py_ssize_t nd = prior.shape[0], m, s
    cdef double acc, top = -INFINITY, total = 0.0, v
    for m in range(nd):
        v = prior[m]
        acc = log(v) if v > 0 else -INFINITY
        for s in range(e0, e1):
            if s == skip:
                continue
            v = b[s, m]
            acc += log(v) if v > 0 else -INFINITY
        out[m] = acc
        if acc > top:
            top = acc
    if not isfinite(top):
        return -1
    for m in range(nd):
        out[m] = exp(out[m] - top)
        total += out[m]
    for m in range(nd):
        out[m] /= total
    return 0


cdef inline double _normalize(double* row, Py_ssize_t nd) noexcept nogil:
    cdef Py_ssize_t m
    cdef double total = 0.0, scale
    for m in range(nd):
        total += row[m]
    if total > UNDERFLOW_LIMIT and isfinite(total):
        scale = 1.0 / total
        for m in range(nd):
            row[m] *= scale
    return total


def variable_update(const double[::1] prior, const double[:, ::1] b,
                    const int64_t[::1] var_ptr,
                    double[:, ::1] a_out, double[:, ::1] marg_out):
    cdef Py_ssize_t n = var_ptr.shape[0] - 1, nd = prior.shape[0]
    cdef Py_ssize_t i, t, m, e0, e1, d, dmax = 0
    cdef double total
    cdef int fallbacks = 0, status = 0
    for i in range(n):
        dmax = max(dmax, var_ptr[i + 1] - var_ptr[i])
    # pre[t] = prior * b[e0] * ... * b[e0 + t - 1]
    cdef double[:, ::1] pre_buf = np.empty((dmax + 1, nd))
    cdef double[::1] suf_buf = np.empty(nd)
    cdef double* pre = &pre_buf[0, 0]
    cdef double* suf = &suf_buf[0]
    cdef const double* bp
    cdef double* out
    with nogil:
        for i in range(n):
            e0 = var_ptr[i]
            e1 = var_ptr[i + 1]
            d = e1 - e0
            for m in range(nd):
                pre[m] = prior[m]
            for t in range(d):
                bp = &b[e0 + t, 0]
                for m in range(nd):
                    pre[(t + 1) * nd + m] = pre[t * nd + m] * bp[m]
            out = &marg_out[i, 0]
            for m in range(nd):
                out[m] = pre[d * nd + m]
            total = _normalize(out, nd)
            if not (total > UNDERFLOW_LIMIT and isfinite(total)):
                fallbacks += 1
                status |= _log_product(prior, b, e0, e1, -1, marg_out[i])
            for m in range(nd):
                suf[m] = 1.0
            for t in range(d - 1, -1, -1):
                out = &a_out[e0 + t, 0]
                bp = &b[e0 + t, 0]
                for m in range(nd):
                    out[m] = pre[t * nd + m] * suf[m]
                    suf[m] *= bp[m]
                total = _normalize(out, nd)
                if not (total > UNDERFLOW_LIMIT and isfinite(total)):
                    fallbacks += 1
                    status |= _log_product(prior, b, e0, e1, e0 + t, a_out[e0 + t])
    if status:
        raise FloatingPointError("product vanished on every cell")
    return fallbacks


def check_combine(const double complex[:, ::1] noise_spec,
                  const double complex[:, ::1] a_spec,
                  const int64_t[::1] row_ptr, const int64_t[::1] row_edges,
                  double complex[:, ::1] out):
    cdef Py_ssize_t n_rows = row_ptr.shape[0] - 1, nf = a_spec.shape[1]
    cdef Py_ssize_t j, t, f, r0, r1
    cdef double complex[::1] acc_buf = np.empty(nf, dtype=np.complex128)
    cdef double complex* acc = &acc_buf[0]
    cdef const double complex* src
    cdef double complex* dst
    with nogil:
        for j in range(n_rows):
            r0 = row_ptr[j]
            r1 = row_ptr[j + 1]
            src = &noise_spec[j, 0]
            for f in range(nf):
                acc[f] = src[f]
            for t in range(r0, r1):
                dst = &out[row_edges[t], 0]
                src = &a_spec[row_edges[t], 0]
                for f in range(nf):
                    dst[f] = acc[f]
                    acc[f] = acc[f] * src[f]
            for f in range(nf):
                acc[f] = 1.0
            for t in range(r1 - 1, r0 - 1, -1):
                dst = &out[row_edges[t], 0]
                src = &a_spec[row_edges[t], 0]
                for f in range(nf):
                    dst[f] = dst[f] * acc[f]
                    acc[f] = acc[f] * src[f]
