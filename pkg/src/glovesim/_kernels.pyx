# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Monte Carlo kernels.

Philox4x64-10 streams reproduce ``numpy.random.Philox(key=seed | stream << 64)``
bit for bit, so every routine here returns exactly what the numpy fallback in
``_fallback.py`` returns for the same arguments.
"""

import numpy as np

from libc.math cimport fabs
from libc.stdint cimport uint64_t, int64_t

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t glv_mulhilo(uint64_t a, uint64_t b, uint64_t *hi) {
        unsigned __int128 p = (unsigned __int128)a * b;
        *hi = (uint64_t)(p >> 64);
        return (uint64_t)p;
    }
    """
    uint64_t glv_mulhilo(uint64_t a, uint64_t b, uint64_t *hi) nogil

cdef uint64_t M0 = 0xD2E7470EE14C6C93ULL
cdef uint64_t M1 = 0xCA5A826395121157ULL
cdef uint64_t W0 = 0x9E3779B97F4A7C15ULL
cdef uint64_t W1 = 0xBB67AE8584CAA73BULL
cdef double TO_UNIT = 1.0 / 9007199254740992.0


cdef struct Philox:
    uint64_t ctr[4]
    uint64_t key[2]
    uint64_t buf[4]
    int pos


cdef inline void philox_init(Philox *p, uint64_t seed, uint64_t stream) noexcept nogil:
    p.ctr[0] = 0
    p.ctr[1] = 0
    p.ctr[2] = 0
    p.ctr[3] = 0
    p.key[0] = seed
    p.key[1] = stream
    p.pos = 4


cdef inline void philox_block(Philox *p) noexcept nogil:
    cdef uint64_t c0, c1, c2, c3, k0, k1, hi0, lo0, hi1, lo1
    cdef int r
    # counter increments before each block, with carry
    p.ctr[0] += 1
    if p.ctr[0] == 0:
        p.ctr[1] += 1
        if p.ctr[1] == 0:
            p.ctr[2] += 1
            if p.ctr[2] == 0:
                p.ctr[3] += 1
    c0 = p.ctr[0]
    c1 = p.ctr[1]
    c2 = p.ctr[2]
    c3 = p.ctr[3]
    k0 = p.key[0]
    k1 = p.key[1]
    for r in range(10):
        if r > 0:
            k0 += W0
            k1 += W1
        lo0 = glv_mulhilo(M0, c0, &hi0)
        lo1 = glv_mulhilo(M1, c2, &hi1)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    p.buf[0] = c0
    p.buf[1] = c1
    p.buf[2] = c2
    p.buf[3] = c3
    p.pos = 0


cdef inline double philox_uniform(Philox *p) noexcept nogil:
    if p.pos >= 4:
        philox_block(p)
    cdef uint64_t x = p.buf[p.pos]
    p.pos += 1
    return <double>(x >> 11) * TO_UNIT


cdef inline Py_ssize_t categorical(const double[::1] cdf, double u) noexcept nogil:
    cdef Py_ssize_t j = 0
    cdef Py_ssize_t last = cdf.shape[0] - 1
    while j < last and u >= cdf[j]:
        j += 1
    return j


def uniforms(uint64_t seed, uint64_t stream, Py_ssize_t n):
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef Philox p
    cdef Py_ssize_t i
    philox_init(&p, seed, stream)
    with nogil:
        for i in range(n):
            view[i] = philox_uniform(&p)
    return out


def draw_labels(const double[::1] cdf, Py_ssize_t n, uint64_t seed, uint64_t stream):
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] view = out
    cdef Philox p
    cdef Py_ssize_t i
    philox_init(&p, seed, stream)
    with nogil:
        for i in range(n):
            view[i] = categorical(cdf, philox_uniform(&p))
    return out


def trial_counts(const double[::1] cdf, Py_ssize_t n, uint64_t seed,
                 Py_ssize_t t0, Py_ssize_t t1):
    """Outcome counts for trials ``t0 <= t < t1``; trial ``t`` owns stream ``t``."""
    cdef Py_ssize_t k = cdf.shape[0]
    out = np.zeros((t1 - t0, k), dtype=np.int64)
    cdef int64_t[:, ::1] view = out
    cdef Philox p
    cdef Py_ssize_t t, i
    with nogil:
        for t in range(t0, t1):
            philox_init(&p, seed, <uint64_t>t)
            for i in range(n):
                view[t - t0, categorical(cdf, philox_uniform(&p))] += 1
    return out


def exceedance_counts(const double[::1] cdf, const double[::1] q, Py_ssize_t n,
                      double eps, uint64_t seed, Py_ssize_t t0, Py_ssize_t t1):
    """Per outcome, the number of trials with ``|count/n - q| > eps``."""
    cdef Py_ssize_t k = cdf.shape[0]
    out = np.zeros(k, dtype=np.int64)
    cdef int64_t[::1] hits = out
    cdef int64_t[::1] counts = np.zeros(k, dtype=np.int64)
    cdef Philox p
    cdef Py_ssize_t t, i, j
    cdef double dn = <double>n
    with nogil:
        for t in range(t0, t1):
            for j in range(k):
                counts[j] = 0
            philox_init(&p, seed, <uint64_t>t)
            for i in range(n):
                counts[categorical(cdf, philox_uniform(&p))] += 1
            for j in range(k):
                if fabs(<double>counts[j] / dn - q[j]) > eps:
                    hits[j] += 1
    return out


def l1_failures(const double[::1] cdf, const double[::1] q, Py_ssize_t alpha,
                double eps, uint64_t seed, Py_ssize_t t0, Py_ssize_t t1):
    """Number of trials whose empirical L1 error exceeds ``eps``."""
    cdef Py_ssize_t k = cdf.shape[0]
    cdef int64_t[::1] counts = np.zeros(k, dtype=np.int64)
    cdef Philox p
    cdef Py_ssize_t t, i, j
    cdef int64_t fails = 0
    cdef double da = <double>alpha
    cdef double l1
    with nogil:
        for t in range(t0, t1):
            for j in range(k):
                counts[j] = 0
            philox_init(&p, seed, <uint64_t>t)
            for i in range(alpha):
                counts[categorical(cdf, philox_uniform(&p))] += 1
            l1 = 0.0
            for j in range(k):
                l1 += fabs(<double>counts[j] / da - q[j])
            if l1 > eps:
                fails += 1
    return fails
