"""Vectorized numpy implementation of the Monte Carlo kernels.

Every random quantity is a pure function of ``(seed, pixel, frame)`` through
Philox4x32-10, so results do not depend on chunking or evaluation order. The
compiled kernel implements the same arithmetic draw-for-draw.

Per draw, counter ``(pixel_lo, pixel_hi, frame, 0)`` gives four words: words
0-1 form a 53-bit uniform for Poisson inversion, words 2-3 drive one
Box-Muller normal. Poisson means >= ``PTRS_SWITCH`` use transformed rejection,
attempt ``j`` reading counter ``(pixel_lo, pixel_hi, frame, j)``.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["philox4x32", "voltages", "threshold_frames", "count_ones", "PTRS_SWITCH"]

PTRS_SWITCH = 30.0
CHUNK = 1 << 20

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWO_M32 = 1.0 / 4294967296.0
_TWO_PI = 6.283185307179586

# libm, not numpy's SIMD loops, so the results match the compiled kernel to the bit
_lgamma = np.vectorize(math.lgamma, otypes=[float])
_log = np.vectorize(lambda v: math.log(v) if v > 0.0 else -math.inf, otypes=[float])
_cos = np.vectorize(math.cos, otypes=[float])


def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Philox4x32-10 on uint64 arrays holding 32-bit counter words."""
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 &= 0xFFFFFFFF
    k1 &= 0xFFFFFFFF
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> _S32) ^ c1 ^ np.uint64(k0), p1 & _MASK,
                          (p0 >> _S32) ^ c3 ^ np.uint64(k1), p0 & _MASK)
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _u53(hi, lo):
    return ((hi >> np.uint64(5)).astype(np.float64) * 67108864.0
            + (lo >> np.uint64(6)).astype(np.float64)) * _TWO_M53


def _poisson_inversion(u, theta, p0):
    k = np.zeros(u.shape, dtype=np.int64)
    p = p0.copy()
    s = p0.copy()
    active = np.nonzero(u >= s)[0]
    kf = 0.0
    while active.size:
        kf += 1.0
        k[active] += 1
        p[active] = p[active] * (theta[active] / kf)
        s[active] = s[active] + p[active]
        keep = (u[active] >= s[active]) & (p[active] > 0.0)
        active = active[keep]
    return k


def _poisson_ptrs(theta, pix, frame, seed):
    """Transformed rejection (Hormann 1993) for large means."""
    slam = np.sqrt(theta)
    loglam = _log(theta)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    out = np.full(theta.shape, -1, dtype=np.int64)
    todo = np.arange(theta.size)
    attempt = 0
    k0, k1 = seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF
    while todo.size:
        attempt += 1
        pi = pix[todo]
        w0, w1, w2, w3 = philox4x32(pi & _MASK, pi >> _S32, frame[todo],
                                    np.full(todo.size, attempt, dtype=np.uint64), k0, k1)
        U = _u53(w0, w1) - 0.5
        V = _u53(w2, w3)
        lam = theta[todo]
        us = 0.5 - np.abs(U)
        kk = np.floor((2.0 * a[todo] / us + b[todo]) * U + lam + 0.43)
        fast = (us >= 0.07) & (V <= vr[todo])
        reject = (kk < 0) | ((us < 0.013) & (V < us))
        slow = ~fast & ~reject
        ok = fast.copy()
        if slow.any():
            s = np.nonzero(slow)[0]
            lhs = _log(V[s]) + _log(invalpha[todo][s]) - _log(a[todo][s] / (us[s] * us[s]) + b[todo][s])
            rhs = -lam[s] + kk[s] * loglam[todo][s] - _lgamma(kk[s] + 1.0)
            ok[s] = lhs <= rhs
        out[todo[ok]] = kk[ok].astype(np.int64)
        todo = todo[~ok]
    return out


def _draw(theta, p0, pix, frame, sigma: float, seed: int):
    """Analog voltage for each (pixel, frame) pair in the flat input arrays."""
    k0, k1 = seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF
    w0, w1, w2, w3 = philox4x32(pix & _MASK, pix >> _S32, frame,
                                np.zeros(pix.size, dtype=np.uint64), k0, k1)
    u = _u53(w0, w1)
    big = theta >= PTRS_SWITCH
    if big.any():
        small = ~big
        k = np.empty(theta.size, dtype=np.int64)
        k[small] = _poisson_inversion(u[small], theta[small], p0[small])
        bi = np.nonzero(big)[0]
        k[bi] = _poisson_ptrs(theta[bi], pix[bi], frame[bi], seed)
    else:
        k = _poisson_inversion(u, theta, p0)
    x = k.astype(np.float64)
    if sigma > 0.0:
        u1 = (w2.astype(np.float64) + 0.5) * _TWO_M32
        u2 = w3.astype(np.float64) * _TWO_M32
        g = np.sqrt(-2.0 * _log(u1)) * _cos(_TWO_PI * u2)
        x = x + sigma * g
    return x


def voltages(theta, p0, sigma: float, seed: int, frame: int = 0, offset: int = 0,
             num_threads: int = 1):
    """One analog sample per entry of ``theta``; entry ``i`` uses pixel index ``offset + i``."""
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    p0 = np.ascontiguousarray(p0, dtype=np.float64)
    out = np.empty(theta.size, dtype=np.float64)
    for s in range(0, theta.size, CHUNK):
        e = min(s + CHUNK, theta.size)
        pix = np.arange(offset + s, offset + e, dtype=np.uint64)
        fr = np.full(e - s, frame, dtype=np.uint64)
        out[s:e] = _draw(theta[s:e], p0[s:e], pix, fr, sigma, seed)
    return out


def threshold_frames(theta, p0, sigma: float, q: float, seed: int, n_frames: int,
                     num_threads: int = 1):
    """Bit-packed binary frames, shape ``(n_frames, ceil(npix / 8))``, LSB-first."""
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    p0 = np.ascontiguousarray(p0, dtype=np.float64)
    npix = theta.size
    nbytes = (npix + 7) // 8
    out = np.zeros((n_frames, nbytes), dtype=np.uint8)
    if npix == 0:
        return out
    per = max(1, CHUNK // npix)
    pix_all = np.arange(npix, dtype=np.uint64)
    for f0 in range(0, n_frames, per):
        f1 = min(f0 + per, n_frames)
        nf = f1 - f0
        pix = np.tile(pix_all, nf)
        fr = np.repeat(np.arange(f0, f1, dtype=np.uint64), npix)
        x = _draw(np.tile(theta, nf), np.tile(p0, nf), pix, fr, sigma, seed)
        bits = (x >= q).reshape(nf, npix)
        out[f0:f1] = np.packbits(bits, axis=1, bitorder="little")
    return out


def count_ones(theta, p0, sigma: float, q: float, seed: int, n_frames: int,
               num_threads: int = 1):
    """Number of ones over ``n_frames`` frames for every pixel (no packing)."""
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    p0 = np.ascontiguousarray(p0, dtype=np.float64)
    npix = theta.size
    out = np.zeros(npix, dtype=np.int64)
    if npix == 0:
        return out
    per = max(1, CHUNK // npix)
    pix_all = np.arange(npix, dtype=np.uint64)
    for f0 in range(0, n_frames, per):
        f1 = min(f0 + per, n_frames)
        nf = f1 - f0
        x = _draw(np.tile(theta, nf), np.tile(p0, nf), np.tile(pix_all, nf),
                  np.repeat(np.arange(f0, f1, dtype=np.uint64), npix), sigma, seed)
        out += (x >= q).reshape(nf, npix).sum(axis=0)
    return out
