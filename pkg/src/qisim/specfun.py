"""Special functions and scalar root solvers.

Standard-normal CDF/quantile, the principal-branch Lambert-W function and the
two-root "modified" Lambert-W used for SNR = 1 crossings of a one-bit sensor.
Everything here is scalar, pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "NoCrossingError",
    "ModifiedLambertPair",
    "normal_cdf",
    "normal_quantile",
    "lambert_w0",
    "lambert_w0_branch",
    "modified_lambert_v",
    "modified_lambert_peak",
    "brent",
]

INV_E = math.exp(-1.0)
_SQRT1_2 = math.sqrt(0.5)
_STD_NORMAL = NormalDist()
# Below this distance from the branch point, 1 + W is solved in shifted form.
_BRANCH_SWITCH = 0.25


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class NoCrossingError(ArithmeticError):
    """The SNR curve never reaches 1, so no crossing (and no dynamic range) exists."""


def normal_cdf(z):
    """Standard normal CDF, accurate in both tails.

    Accepts a scalar or an array. Uses ``erfc`` so that ``normal_cdf(-8)`` keeps
    full relative precision instead of cancelling against 1.
    """
    if np.ndim(z) == 0:
        return 0.5 * math.erfc(-float(z) * _SQRT1_2)
    z = np.asarray(z, dtype=float)
    return 0.5 * _erfc_vec(-z * _SQRT1_2)


_erfc_vec = np.vectorize(math.erfc, otypes=[float])


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf` on the open interval (0, 1)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal_quantile needs 0 < p < 1, got {p!r}")
    return _STD_NORMAL.inv_cdf(p)


# ---------------------------------------------------------------------------
# Lambert W, principal branch
# ---------------------------------------------------------------------------

def _shifted_residual(y: float) -> float:
    """F(y) = 1 - (1 - y) e^y, which equals 1 + e*c when y = 1 + W(c)."""
    if abs(y) < 0.1:
        # sum_{n>=2} (n-1) y^n / n!; the closed form cancels catastrophically here
        term = y * y / 2.0
        total = term
        n = 2
        while True:
            term *= y / (n + 1)
            n += 1
            add = (n - 1) * term
            total += add
            if abs(add) <= 1e-18 * abs(total):
                return total
    return 1.0 - (1.0 - y) * math.exp(y)


def lambert_w0_branch(d: float) -> float:
    """Return ``1 + W0(c)`` for ``c = -(1 - d)/e``, given the branch distance ``d``.

    Evaluating W0 near -1/e from ``c`` itself throws away the information in
    ``d`` (``-(1 - 1e-20)/e`` rounds to ``-1/e``). Callers that know ``d``
    directly keep full relative precision in ``1 + W``.
    """
    d = float(d)
    if d < 0.0:
        if d < -1e-12:
            raise DomainError(f"branch distance must be >= 0, got {d!r}")
        d = 0.0
    if d == 0.0:
        return 0.0
    if d > 1.0:
        # c > 0: no cancellation issue, go through the plain solver
        return 1.0 + lambert_w0(-(1.0 - d) * INV_E)
    p = math.sqrt(2.0 * d)
    # series of 1 + W around the branch point in p = sqrt(2(ec + 1))
    y = p - p * p / 3.0 + 11.0 / 72.0 * p ** 3 - 43.0 / 540.0 * p ** 4
    if y <= 0.0 or y > 1.5:
        y = min(max(p, 1e-300), 1.0)
    for _ in range(60):
        f = _shifted_residual(y) - d
        fp = y * math.exp(y)
        fpp = (1.0 + y) * math.exp(y)
        step = 2.0 * f * fp / (2.0 * fp * fp - f * fpp)
        y_new = y - step
        if y_new <= 0.0:
            y_new = y / 2.0
        if abs(y_new - y) <= 1e-15 * y:
            return y_new
        y = y_new
    return y


def lambert_w0(c: float) -> float:
    """Principal branch of the Lambert W function: the ``x >= -1`` with ``x e^x = c``."""
    c = float(c)
    if not math.isfinite(c):
        raise DomainError(f"lambert_w0 needs a finite argument, got {c!r}")
    if c < -INV_E:
        if c < -INV_E - 1e-12:
            raise DomainError(f"lambert_w0 needs c >= -1/e, got {c!r}")
        return -1.0
    if c == 0.0:
        return 0.0
    d = 1.0 + math.e * c
    if d < _BRANCH_SWITCH:
        return lambert_w0_branch(d) - 1.0
    # initial guess: log asymptotics for large c, Pade-ish form near 0
    if c > math.e:
        lc = math.log(c)
        w = lc - math.log(lc)
    elif c > 0.0:
        w = math.log1p(c) * (1.0 - math.log1p(math.log1p(c)) / (2.0 + math.log1p(c)))
    else:
        p = math.sqrt(2.0 * d)
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - c
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-15 * (1.0 + abs(w)):
            break
    return w


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

def brent(f: Callable[[float], float], a: float, b: float, *,
          xtol: float = 1e-15, rtol: float = 4e-16, maxiter: int = 200) -> float:
    """Brent's method on a sign-changing bracket ``[a, b]``."""
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0) == (fb > 0):
        raise ValueError("brent: f(a) and f(b) must differ in sign")
    c, fc = a, fa
    d = e = b - a
    for _ in range(maxiter):
        if (fb > 0) == (fc > 0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol = 2.0 * rtol * abs(b) + 0.5 * xtol
        m = 0.5 * (c - b)
        if abs(m) <= tol or fb == 0.0:
            return b
        if abs(e) >= tol and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q_ = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q_ * (q_ - r) - (b - a) * (r - 1.0))
                q = (q_ - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * q - abs(tol * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        b += d if abs(d) > tol else math.copysign(tol, m)
        fb = f(b)
    return b


def _bisect(f: Callable[[float], float], a: float, b: float, iters: int) -> tuple[float, float]:
    fa = f(a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m, m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return a, b


# ---------------------------------------------------------------------------
# Modified Lambert W: roots of omega [(x/c)^2 + 1] e^{-x} = 1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModifiedLambertPair:
    v_minus: float
    v_plus: float


def modified_lambert_peak(omega: float) -> tuple[float, float]:
    """Location and height of the maximum of ``x / sqrt(e^x / omega - 1)``."""
    x_peak = 2.0 + lambert_w0(-2.0 * omega * math.exp(-2.0))
    return x_peak, x_peak / math.sqrt(_scaled_excess(x_peak, omega))


def _scaled_excess(x: float, omega: float) -> float:
    # e^x / omega - 1 without cancellation at small x
    return (math.expm1(x) + (1.0 - omega)) / omega


def modified_lambert_v(c: float, omega: float) -> ModifiedLambertPair:
    """The two positive roots ``V-(c) <= V+(c)`` of ``omega [(x/c)^2 + 1] e^{-x} = 1``.

    Raises :class:`NoCrossingError` when ``c`` is at or above the peak of
    ``x / sqrt(e^x / omega - 1)``. The trivial root ``x = 0`` that appears when
    ``omega == 1`` is never returned.
    """
    c = float(c)
    omega = float(omega)
    if not c > 0.0:
        raise DomainError(f"c must be positive, got {c!r}")
    if not 0.0 < omega <= 1.0:
        raise DomainError(f"omega must lie in (0, 1], got {omega!r}")
    log_omega = math.log(omega)
    inv_c2 = 1.0 / (c * c)

    def g(x: float) -> float:
        # log of the left-hand side; positive strictly between the roots
        return log_omega + math.log1p(x * x * inv_c2) - x

    x_peak, peak = modified_lambert_peak(omega)
    if c >= peak or g(x_peak) <= 0.0:
        raise NoCrossingError(
            f"c={c!r} is not below the curve peak {peak!r} (omega={omega!r})")

    lo = min(1e-9, 1e-3 * c * c)
    while g(lo) >= 0.0:
        # only reachable for omega == 1 with tiny c; the true root is ~c^2
        lo *= 1e-3
        if lo < 1e-300:
            raise NoCrossingError("lower crossing underflows")
    hi = 2.0 * x_peak
    while g(hi) >= 0.0:
        hi *= 2.0

    a, b = _bisect(g, lo, x_peak, 8)
    v_minus = brent(g, a, b) if a != b else a
    a, b = _bisect(g, x_peak, hi, 8)
    v_plus = brent(g, a, b) if a != b else a
    return ModifiedLambertPair(v_minus, v_plus)
