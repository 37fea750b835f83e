"""Probabilistic channel of a one-bit quanta image sensor and a linear CIS.

A pixel integrates ``X = Poisson(theta) + Normal(0, sigma^2)`` photoelectrons
and a comparator emits 1 when ``X >= q``. This module evaluates the resulting
bit density, exposure-referred SNR (exact series and the small-read-noise
closed form), the CIS reference SNR, ADC quantization and read-noise bounds.
"""

from __future__ import annotations

import math
import warnings
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .specfun import DomainError, normal_cdf, normal_quantile

__all__ = [
    "SensorParams",
    "QisConfig",
    "CisConfig",
    "ExposureGrid",
    "SnrCurve",
    "bit_density",
    "bit_density_complement",
    "bit_density_per_frame",
    "snr_qis",
    "snr_qis_approx",
    "snr_cis",
    "read_noise_delta",
    "omega_of_sigma",
    "read_noise_bound",
    "adc_quantize",
    "snr_curve",
    "to_db",
    "omega_shift",
]

SATURATION_EPS = 1e-12
FD_REL_STEP = 1e-5
APPROX_SIGMA_LIMIT = 0.3


@dataclass(frozen=True)
class SensorParams:
    sigma: float = 0.0  # read noise, e- rms
    q: float = 0.5      # comparator threshold, e-

    def __post_init__(self):
        if not self.sigma >= 0.0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma!r}")
        if not self.q > 0.0:
            raise DomainError(f"q must be > 0, got {self.q!r}")


@dataclass(frozen=True)
class QisConfig:
    params: SensorParams = field(default_factory=SensorParams)
    n_frames: int = 1

    def __post_init__(self):
        if int(self.n_frames) != self.n_frames or self.n_frames < 1:
            raise DomainError(f"n_frames must be a positive integer, got {self.n_frames!r}")

    @classmethod
    def make(cls, n_frames: int, sigma: float = 0.0, q: float = 0.5) -> "QisConfig":
        return cls(SensorParams(sigma, q), int(n_frames))


@dataclass(frozen=True)
class CisConfig:
    sigma: float
    fwc: float
    adc_bits: Optional[int] = None  # None: ideal continuous readout

    def __post_init__(self):
        if not self.sigma >= 0.0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma!r}")
        if not self.fwc > 0.0:
            raise DomainError(f"fwc must be > 0, got {self.fwc!r}")
        if self.adc_bits is not None and self.adc_bits < 1:
            raise DomainError(f"adc_bits must be >= 1, got {self.adc_bits!r}")


@dataclass(frozen=True)
class ExposureGrid:
    thetas: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        if t.ndim != 1 or t.size == 0:
            raise DomainError("exposure grid must be a non-empty 1-D sequence")
        if np.any(~(t > 0)):
            raise DomainError("exposures must be > 0")
        if np.any(np.diff(t) <= 0):
            raise DomainError("exposures must be strictly increasing")
        object.__setattr__(self, "thetas", t)

    @classmethod
    def logspace(cls, lo: float, hi: float, n: int) -> "ExposureGrid":
        if n == 1:
            return cls(np.array([lo]))
        return cls(np.logspace(math.log10(lo), math.log10(hi), n))

    def __len__(self):
        return self.thetas.size


@dataclass(frozen=True)
class SnrCurve:
    grid: ExposureGrid
    snr_values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.snr_values, dtype=float)
        if v.shape != self.grid.thetas.shape:
            raise ValueError("snr_values must match the grid length")
        if np.any(v < 0):
            raise ValueError("SNR values must be >= 0")
        object.__setattr__(self, "snr_values", v)

    @property
    def snr_db(self) -> np.ndarray:
        return to_db(self.snr_values)


def to_db(ratio):
    """20 log10 of an amplitude ratio; 0 maps to -inf."""
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(ratio)


# ---------------------------------------------------------------------------
# read-noise constants
# ---------------------------------------------------------------------------

_omega_shift: ContextVar[float] = ContextVar("omega_shift", default=0.0)


@contextmanager
def omega_shift(eps: float):
    """Temporarily subtract ``eps`` from every omega (fault injection for validation)."""
    token = _omega_shift.set(float(eps))
    try:
        yield
    finally:
        _omega_shift.reset(token)


def read_noise_delta(sigma: float) -> float:
    """Probability ``Phi(-0.5/sigma)`` that read noise alone flips a zero-photon bit.

    Kept separate from ``omega = 1 - delta`` because for small sigma ``delta``
    underflows the resolution of ``1 - delta``.
    """
    sigma = float(sigma)
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma!r}")
    delta = 0.0 if sigma == 0.0 else normal_cdf(-0.5 / sigma)
    return delta + _omega_shift.get()


def omega_of_sigma(sigma: float) -> float:
    return 1.0 - read_noise_delta(sigma)


def read_noise_bound(delta: float) -> float:
    """Largest read noise keeping the zero-photon error probability at most ``delta``."""
    delta = float(delta)
    if not 0.0 < delta < 0.5:
        raise DomainError(f"delta must lie in (0, 0.5), got {delta!r}")
    # Phi^{-1}(1 - delta) == -Phi^{-1}(delta), avoids rounding 1 - delta
    return 0.5 / -normal_quantile(delta)


# ---------------------------------------------------------------------------
# bit density
# ---------------------------------------------------------------------------

def _kmax(theta: float) -> int:
    """Series cut-off, rounded up to a power of two so lookup tables can be shared."""
    need = max(30, math.ceil(theta + 12.0 * math.sqrt(theta)))
    return 1 << need.bit_length()


@lru_cache(maxsize=256)
def _phi_table(sigma: float, q: float, kmax: int) -> tuple[np.ndarray, np.ndarray]:
    """(Phi((k-q)/sigma), Phi((q-k)/sigma)) for k = 0..kmax; both tails kept accurate."""
    k = np.arange(kmax + 1, dtype=float)
    if sigma == 0.0:
        up = (k >= q).astype(float)
        return up, 1.0 - up
    z = (k - q) / sigma
    return normal_cdf(z), normal_cdf(-z)


@lru_cache(maxsize=32)
def _lgamma_table(kmax: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(kmax + 1, dtype=float)
    return k, np.array([math.lgamma(v + 1.0) for v in k])


def _poisson_pmf(theta: float, kmax: int) -> np.ndarray:
    k, lg = _lgamma_table(kmax)
    return np.exp(k * math.log(theta) - theta - lg)


def _density_pair(theta: float, params: SensorParams) -> tuple[float, float]:
    """(mu, 1 - mu) at per-frame exposure ``theta``, each summed directly."""
    if params.sigma == 0.0 and params.q <= 1.0:
        return -math.expm1(-theta), math.exp(-theta)
    kmax = _kmax(theta)
    up, down = _phi_table(params.sigma, params.q, kmax)
    pmf = _poisson_pmf(theta, kmax)
    return float(pmf @ up), float(pmf @ down)


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not theta > 0.0 or not math.isfinite(theta):
        raise DomainError(f"exposure must be finite and > 0, got {theta!r}")
    return theta


def bit_density(theta: float, params: SensorParams) -> float:
    """Probability that one binary measurement at exposure ``theta`` reads 1."""
    return _density_pair(_check_theta(theta), params)[0]


def bit_density_complement(theta: float, params: SensorParams) -> float:
    """``1 - bit_density`` computed without cancellation near saturation."""
    return _density_pair(_check_theta(theta), params)[1]


def bit_density_per_frame(theta_total: float, config: QisConfig) -> float:
    """Bit density when a total exposure is split evenly over ``config.n_frames`` frames."""
    return bit_density(_check_theta(theta_total) / config.n_frames, config.params)


# ---------------------------------------------------------------------------
# SNR
# ---------------------------------------------------------------------------

def snr_qis(theta: float, config: QisConfig) -> float:
    """Exposure-referred SNR of N averaged one-bit frames.

    ``sqrt(N) * theta / sqrt(mu (1 - mu)) * dmu/dtheta`` with the derivative
    taken by central differences on whichever of ``mu`` and ``1 - mu`` is
    smaller. Returns 0 when the bit density is saturated at 0 or 1.
    """
    theta = _check_theta(theta)
    n = config.n_frames
    p = config.params
    mu, mu_c = _density_pair(theta / n, p)
    if mu < SATURATION_EPS or mu_c < SATURATION_EPS:
        return 0.0
    h = max(theta * FD_REL_STEP, 1e-12)
    lo = max(theta - h, 0.5 * theta)
    hi = theta + h
    a, b = _density_pair(lo / n, p), _density_pair(hi / n, p)
    if mu <= mu_c:
        dmu = (b[0] - a[0]) / (hi - lo)
    else:
        dmu = (a[1] - b[1]) / (hi - lo)
    return math.sqrt(n) * theta * dmu / math.sqrt(mu * mu_c)


def snr_qis_approx(theta: float, config: QisConfig) -> float:
    """Small-read-noise closed form ``theta/sqrt(N) / sqrt(e^{theta/N}/omega - 1)``."""
    theta = _check_theta(theta)
    p = config.params
    if p.q != 0.5:
        raise DomainError("the closed-form SNR is only defined for q = 0.5")
    if p.sigma > APPROX_SIGMA_LIMIT:
        warnings.warn(f"sigma={p.sigma} is outside the closed-form validity region "
                      f"(sigma <= {APPROX_SIGMA_LIMIT})", stacklevel=2)
    n = config.n_frames
    delta = read_noise_delta(p.sigma)
    x = theta / n
    if x > 700.0:  # e^x overflows; the SNR is below 1e-140 here anyway
        return 0.0
    excess = (math.expm1(x) + delta) / (1.0 - delta)
    return theta / math.sqrt(n * excess)


def snr_cis(theta: float, config: CisConfig) -> float:
    theta = _check_theta(theta)
    if theta >= config.fwc:
        return 0.0
    return theta / math.sqrt(theta + config.sigma ** 2)


def adc_quantize(x, config: CisConfig):
    """Round an analog value onto the ``2^L + 1`` point lattice ``k FWC / 2^L``.

    Inputs are clamped to ``[0, FWC]`` first. Works on scalars and arrays.
    """
    if config.adc_bits is None:
        raise DomainError("adc_quantize needs a config with adc_bits")
    levels = 2 ** int(config.adc_bits)
    step = config.fwc / levels
    clamped = np.clip(np.asarray(x, dtype=float), 0.0, config.fwc)
    out = np.round(clamped / step) * step
    return float(out) if out.ndim == 0 else out


def snr_curve(grid: ExposureGrid, config: Union[QisConfig, CisConfig], *,
              approx: bool = False) -> SnrCurve:
    """Sample the matching SNR function at every exposure of ``grid``."""
    if isinstance(config, QisConfig):
        fn = snr_qis_approx if approx else snr_qis
    elif isinstance(config, CisConfig):
        fn = snr_cis
    else:
        raise TypeError(f"unsupported config type {type(config).__name__}")
    values = np.array([fn(t, config) for t in grid.thetas])
    return SnrCurve(grid, values)
