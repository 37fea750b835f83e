"""Sensor design calculators: optimal exposure and frame count, dynamic range.

All results here use the small-read-noise closed form of the one-bit SNR,
``theta/sqrt(N) / sqrt(e^{theta/N}/omega - 1)``, whose optima and unity
crossings have Lambert-W type closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import model
from .model import CisConfig, QisConfig, snr_qis_approx
from .specfun import (DomainError, NoCrossingError, lambert_w0, lambert_w0_branch,
                      modified_lambert_v)

__all__ = [
    "UNBOUNDED",
    "Unbounded",
    "BracketSchedule",
    "DynamicRangeReport",
    "FrameChoice",
    "optimal_exposure",
    "optimal_frames",
    "frame_constant",
    "frame_choice",
    "snr_unity_crossings",
    "dynamic_range_qis",
    "dynamic_range_cis",
    "dynamic_range_bracket",
    "bracket_snr",
    "bracket_envelope",
    "envelope_crossings",
    "numeric_snr_peak",
    "frames_sweep_peak",
    "SearchRangeError",
]


class Unbounded:
    """Marker for an optimum that sits at infinity (zero read noise)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __str__(self):
        return "inf"


UNBOUNDED = Unbounded()


class SearchRangeError(ValueError):
    """Numerical peak landed on the boundary of the search range."""


@dataclass(frozen=True)
class BracketSchedule:
    taus: tuple
    frames_per_bracket: int

    def __post_init__(self):
        taus = tuple(sorted((_as_scale(t) for t in self.taus), reverse=True))
        if not taus:
            raise DomainError("a bracket schedule needs at least one tau")
        if any(t <= 0 for t in taus):
            raise DomainError("bracket scales must be > 0")
        if self.frames_per_bracket < 1:
            raise DomainError("frames_per_bracket must be >= 1")
        object.__setattr__(self, "taus", taus)

    @property
    def tau_max(self):
        return self.taus[0]

    @property
    def tau_min(self):
        return self.taus[-1]


def _as_scale(t) -> Union[Fraction, float]:
    if isinstance(t, (Fraction, int)):
        return Fraction(t)
    if isinstance(t, str):
        return Fraction(t.strip())
    return float(t)


@dataclass(frozen=True)
class DynamicRangeReport:
    theta_minus: float
    theta_plus: float
    dr_db: float
    sensor_term_db: float
    bracket_term_db: float = 0.0
    theta_minus_exact: Optional[float] = None  # CIS only: exact quadratic root


@dataclass(frozen=True)
class FrameChoice:
    """Real-valued optimal frame count and its two integer neighbours."""
    n_star: float
    n_floor: int
    n_ceil: int
    snr_floor: float
    snr_ceil: float

    @property
    def best(self) -> int:
        return self.n_floor if self.snr_floor >= self.snr_ceil else self.n_ceil


# ---------------------------------------------------------------------------
# optima
# ---------------------------------------------------------------------------

def optimal_exposure(n_frames: int, sigma: float) -> float:
    """Exposure maximizing the closed-form SNR at fixed ``N``: ``N [2 + W(-2 omega e^-2)]``."""
    if n_frames < 1:
        raise DomainError("n_frames must be >= 1")
    omega = model.omega_of_sigma(sigma)
    return n_frames * (2.0 + lambert_w0(-2.0 * omega * math.exp(-2.0)))


def frame_constant(sigma: float):
    """Slope ``1 / (1 + W(-omega/e))`` of the optimal frame count in exposure.

    Returns :data:`UNBOUNDED` at zero read noise.
    """
    sigma = float(sigma)
    delta = model.read_noise_delta(sigma)
    if delta <= 0.0:
        return UNBOUNDED
    # -omega/e = -(1 - delta)/e sits a distance delta from the branch point
    return 1.0 / lambert_w0_branch(delta)


def optimal_frames(theta: float, sigma: float):
    """Real-valued frame count maximizing the closed-form SNR at fixed exposure."""
    theta = float(theta)
    if not theta > 0:
        raise DomainError("theta must be > 0")
    k = frame_constant(sigma)
    if k is UNBOUNDED:
        return UNBOUNDED
    return theta * k


def frame_choice(theta: float, sigma: float, q: float = 0.5) -> FrameChoice:
    """Optimal ``N`` with both adjacent integers and their closed-form SNRs."""
    n_star = optimal_frames(theta, sigma)
    if n_star is UNBOUNDED:
        raise DomainError("no finite optimum at zero read noise")
    lo = max(1, math.floor(n_star))
    hi = max(1, math.ceil(n_star))
    s_lo = snr_qis_approx(theta, QisConfig.make(lo, sigma, q))
    s_hi = snr_qis_approx(theta, QisConfig.make(hi, sigma, q))
    return FrameChoice(n_star, lo, hi, s_lo, s_hi)


# ---------------------------------------------------------------------------
# dynamic range
# ---------------------------------------------------------------------------

def snr_unity_crossings(n_frames: int, sigma: float) -> tuple[float, float]:
    """Exposures where the closed-form SNR equals 1: ``N V-/+(1/sqrt N)``."""
    if n_frames < 1:
        raise DomainError("n_frames must be >= 1")
    omega = model.omega_of_sigma(sigma)
    pair = modified_lambert_v(1.0 / math.sqrt(n_frames), omega)
    return n_frames * pair.v_minus, n_frames * pair.v_plus


def dynamic_range_qis(n_frames: int, sigma: float) -> DynamicRangeReport:
    t_lo, t_hi = snr_unity_crossings(n_frames, sigma)
    dr = 20.0 * math.log10(t_hi / t_lo)
    return DynamicRangeReport(t_lo, t_hi, dr, dr, 0.0)


def dynamic_range_cis(config: CisConfig) -> DynamicRangeReport:
    """``20 log10(FWC / sigma)``; the exact low crossing is carried alongside."""
    sigma, fwc = config.sigma, config.fwc
    if not sigma > 0:
        raise DomainError("CIS dynamic range needs sigma > 0")
    if not fwc > sigma:
        raise DomainError(f"degenerate range: fwc={fwc} must exceed sigma={sigma}")
    exact = 0.5 + 0.5 * math.sqrt(1.0 + 4.0 * sigma * sigma)
    dr = 20.0 * math.log10(fwc / sigma)
    return DynamicRangeReport(sigma, float(fwc), dr, dr, 0.0, theta_minus_exact=exact)


def _log_ratio_db(hi, lo) -> float:
    if isinstance(hi, Fraction) and isinstance(lo, Fraction):
        r = hi / lo
        # log of numerator and denominator separately keeps big fractions exact-ish
        return 20.0 * (math.log10(r.numerator) - math.log10(r.denominator))
    return 20.0 * math.log10(float(hi) / float(lo))


def dynamic_range_bracket(schedule: BracketSchedule, sigma: float) -> DynamicRangeReport:
    """Dynamic range of K brackets of N frames each: sensor term plus bracket term."""
    n = schedule.frames_per_bracket
    omega = model.omega_of_sigma(sigma)
    pair = modified_lambert_v(1.0 / math.sqrt(n), omega)
    sensor = 20.0 * math.log10(pair.v_plus / pair.v_minus)
    bracket = _log_ratio_db(schedule.tau_max, schedule.tau_min)
    t_lo = n / float(schedule.tau_max) * pair.v_minus
    t_hi = n / float(schedule.tau_min) * pair.v_plus
    return DynamicRangeReport(t_lo, t_hi, sensor + bracket, sensor, bracket)


def bracket_snr(theta: float, tau, config: QisConfig) -> float:
    """Closed-form SNR of one bracket whose integration time scales exposure by ``tau``."""
    tau = float(tau)
    if not tau > 0:
        raise DomainError("tau must be > 0")
    return snr_qis_approx(tau * float(theta), config)


def bracket_envelope(thetas: Iterable[float], schedule: BracketSchedule,
                     sigma: float, q: float = 0.5) -> np.ndarray:
    """Combined SNR of a bracket set, taken as the best bracket at each exposure."""
    cfg = QisConfig.make(schedule.frames_per_bracket, sigma, q)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    out = np.empty(thetas.size)
    for i, t in enumerate(thetas):
        out[i] = max(bracket_snr(t, tau, cfg) for tau in schedule.taus)
    return out


def envelope_crossings(schedule: BracketSchedule, sigma: float, *,
                       lo: float = 1e-6, hi: float = 1e12,
                       points: int = 4000) -> tuple[float, float]:
    """Outermost exposures where the bracket envelope crosses SNR = 1.

    A log-spaced scan locates the sign changes; bisection in log exposure
    then refines each to machine precision.
    """
    grid = np.logspace(math.log10(lo), math.log10(hi), points)
    env = bracket_envelope(grid, schedule, sigma) - 1.0
    above = np.nonzero(env > 0)[0]
    if above.size == 0:
        raise NoCrossingError("bracket envelope never reaches SNR = 1")
    i0, i1 = above[0], above[-1]
    if i0 == 0 or i1 == grid.size - 1:
        raise SearchRangeError("envelope is above 1 at the scan boundary; widen the range")

    def f(log_t: float) -> float:
        return bracket_envelope([math.exp(log_t)], schedule, sigma)[0] - 1.0

    def refine(a: float, b: float) -> float:
        fa = f(a)
        for _ in range(200):
            m = 0.5 * (a + b)
            if m in (a, b):
                break
            fm = f(m)
            if (fm > 0) == (fa > 0):
                a, fa = m, fm
            else:
                b = m
        return math.exp(0.5 * (a + b))

    t_lo = refine(math.log(grid[i0 - 1]), math.log(grid[i0]))
    t_hi = refine(math.log(grid[i1]), math.log(grid[i1 + 1]))
    return t_lo, t_hi


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def numeric_snr_peak(config: QisConfig, theta_range: Sequence[float], *,
                     tol: float = 1e-12) -> tuple[float, float]:
    """Golden-section search of the closed-form SNR over ``log theta``."""
    a, b = float(theta_range[0]), float(theta_range[1])
    if not 0 < a <= b:
        raise DomainError("theta_range must satisfy 0 < lo <= hi")
    if a == b:
        return a, snr_qis_approx(a, config)

    def f(u: float) -> float:
        return snr_qis_approx(math.exp(u), config)

    lo, hi = math.log(a), math.log(b)
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol * max(1.0, abs(lo)):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
    u = 0.5 * (lo + hi)
    span = math.log(b) - math.log(a)
    if u - math.log(a) < 1e-6 * span or math.log(b) - u < 1e-6 * span:
        raise SearchRangeError("SNR peak is at the edge of theta_range; widen it")
    t = math.exp(u)
    return t, snr_qis_approx(t, config)


def frames_sweep_peak(theta: float, sigma: float, n_values: Iterable[int], *,
                      q: float = 0.5, exact: bool = False) -> tuple[int, float]:
    """Best frame count among ``n_values`` at a fixed exposure (plain sweep)."""
    fn = model.snr_qis if exact else snr_qis_approx
    best_n, best_s = None, -1.0
    for n in n_values:
        s = fn(theta, QisConfig.make(int(n), sigma, q))
        if s > best_s:
            best_n, best_s = int(n), s
    if best_n is None:
        raise DomainError("empty frame-count sweep")
    return best_n, best_s
