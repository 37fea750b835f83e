# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernels; same draws as ``pykernel``, bit for bit."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, log, sqrt, cos, floor, fabs, lgamma
from libc.stdint cimport uint8_t, uint32_t, uint64_t, int64_t

cnp.import_array()

cdef uint64_t M0 = 0xD2511F53
cdef uint64_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85

cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef double TWO_M32 = 1.0 / 4294967296.0
cdef double TWO_PI = 6.283185307179586
cdef double PTRS_SWITCH = 30.0


cdef inline void philox(uint32_t c[4], uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t a0, a1, a2, a3
    cdef int r
    for r in range(10):
        p0 = M0 * c[0]
        p1 = M1 * c[2]
        a0 = <uint32_t>(p1 >> 32) ^ c[1] ^ k0
        a1 = <uint32_t>p1
        a2 = <uint32_t>(p0 >> 32) ^ c[3] ^ k1
        a3 = <uint32_t>p0
        c[0] = a0
        c[1] = a1
        c[2] = a2
        c[3] = a3
        k0 = k0 + W0
        k1 = k1 + W1


cdef inline double u53(uint32_t hi, uint32_t lo) noexcept nogil:
    return (<double>(hi >> 5) * 67108864.0 + <double>(lo >> 6)) * TWO_M53


cdef inline int64_t ptrs(double lam, uint64_t pix, uint64_t frame,
                         uint32_t k0, uint32_t k1) noexcept nogil:
    cdef double slam = sqrt(lam)
    cdef double loglam = log(lam)
    cdef double b = 0.931 + 2.53 * slam
    cdef double a = -0.059 + 0.02483 * b
    cdef double invalpha = 1.1239 + 1.1328 / (b - 3.4)
    cdef double vr = 0.9277 - 3.6224 / (b - 2.0)
    cdef double U, V, us, kk, lhs, rhs
    cdef uint32_t c[4]
    cdef uint32_t attempt = 0
    while True:
        attempt += 1
        c[0] = <uint32_t>pix
        c[1] = <uint32_t>(pix >> 32)
        c[2] = <uint32_t>frame
        c[3] = attempt
        philox(c, k0, k1)
        U = u53(c[0], c[1]) - 0.5
        V = u53(c[2], c[3])
        us = 0.5 - fabs(U)
        kk = floor((2.0 * a / us + b) * U + lam + 0.43)
        if us >= 0.07 and V <= vr:
            return <int64_t>kk
        if kk < 0 or (us < 0.013 and V < us):
            continue
        lhs = log(V) + log(invalpha) - log(a / (us * us) + b)
        rhs = -lam + kk * loglam - lgamma(kk + 1.0)
        if lhs <= rhs:
            return <int64_t>kk


cdef inline double draw(double theta, double p0, uint64_t pix, uint64_t frame,
                        double sigma, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint32_t c[4]
    cdef double u, p, s, kf, x, u1, u2
    cdef int64_t k
    c[0] = <uint32_t>pix
    c[1] = <uint32_t>(pix >> 32)
    c[2] = <uint32_t>frame
    c[3] = 0
    philox(c, k0, k1)
    if theta >= PTRS_SWITCH:
        k = ptrs(theta, pix, frame, k0, k1)
    else:
        u = u53(c[0], c[1])
        p = p0
        s = p0
        kf = 0.0
        while u >= s:
            kf = kf + 1.0
            p = p * (theta / kf)
            s = s + p
            if not p > 0.0:
                break
        k = <int64_t>kf
    x = <double>k
    if sigma > 0.0:
        u1 = (<double>c[2] + 0.5) * TWO_M32
        u2 = <double>c[3] * TWO_M32
        x = x + sigma * (sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2))
    return x


def voltages(theta, p0, double sigma, seed, frame=0, offset=0, int num_threads=1):
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[::1] pz = np.ascontiguousarray(p0, dtype=np.float64)
    cdef Py_ssize_t n = th.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t s64 = seed
    cdef uint32_t k0 = <uint32_t>s64, k1 = <uint32_t>(s64 >> 32)
    cdef uint64_t fr = frame, off = offset
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        o[i] = draw(th[i], pz[i], off + <uint64_t>i, fr, sigma, k0, k1)
    return out


def threshold_frames(theta, p0, double sigma, double q, seed, Py_ssize_t n_frames,
                     int num_threads=1):
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[::1] pz = np.ascontiguousarray(p0, dtype=np.float64)
    cdef Py_ssize_t npix = th.shape[0], nbytes = (npix + 7) // 8
    out = np.zeros((n_frames, nbytes), dtype=np.uint8)
    cdef uint8_t[:, ::1] o = out
    cdef uint64_t s64 = seed
    cdef uint32_t k0 = <uint32_t>s64, k1 = <uint32_t>(s64 >> 32)
    cdef Py_ssize_t f, i
    cdef double x
    # frames own disjoint byte rows, so the parallel loop never shares a byte
    for f in prange(n_frames, nogil=True, num_threads=num_threads, schedule="static"):
        for i in range(npix):
            x = draw(th[i], pz[i], <uint64_t>i, <uint64_t>f, sigma, k0, k1)
            if x >= q:
                o[f, i >> 3] = o[f, i >> 3] | <uint8_t>(1 << (i & 7))
    return out


def count_ones(theta, p0, double sigma, double q, seed, Py_ssize_t n_frames,
               int num_threads=1):
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[::1] pz = np.ascontiguousarray(p0, dtype=np.float64)
    cdef Py_ssize_t npix = th.shape[0], i, f
    out = np.zeros(npix, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef uint64_t s64 = seed
    cdef uint32_t k0 = <uint32_t>s64, k1 = <uint32_t>(s64 >> 32)
    cdef int64_t acc
    for i in prange(npix, nogil=True, num_threads=num_threads, schedule="static"):
        acc = 0
        for f in range(n_frames):
            if draw(th[i], pz[i], <uint64_t>i, <uint64_t>f, sigma, k0, k1) >= q:
                acc = acc + 1
        o[i] = acc
    return out


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Scalar Philox4x32-10 block, for known-answer tests."""
    cdef uint32_t c[4]
    c[0] = c0
    c[1] = c1
    c[2] = c2
    c[3] = c3
    philox(c, <uint32_t>k0, <uint32_t>k1)
    return c[0], c[1], c[2], c[3]
