"""Monte Carlo ground truth for the one-bit sensor and the CIS baseline.

Captures are reproducible: every draw is keyed by ``(seed, pixel, frame)``,
so the same inputs give the same bits on any backend and thread count.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import _kernels, io
from .model import CisConfig, QisConfig, SensorParams, adc_quantize, bit_density
from .specfun import DomainError, brent, normal_cdf

__all__ = [
    "ExposureMap",
    "FrameStack",
    "EstimateMap",
    "SaturationError",
    "sample_voltage",
    "capture_qis",
    "capture_cis",
    "invert_bit_density",
    "mle_table",
    "reconstruct_mle",
    "trial_estimates",
    "empirical_snr",
    "empirical_bit_density",
    "binomial_interval",
    "image_metrics",
]

PathLike = Union[str, Path]
MIN_TRIALS = 1000


class SaturationError(RuntimeError):
    """Every trial saturated, so no finite error estimate exists."""


def _threads(num_threads: Optional[int]) -> int:
    return num_threads if num_threads else (os.cpu_count() or 1)


def _seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise DomainError("seed must fit in an unsigned 64-bit integer")
    return seed


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass
class ExposureMap:
    """Per-pixel exposure in mean photoelectrons, stored row-major as (height, width)."""
    thetas: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thetas, dtype=np.float64)
        if t.ndim != 2 or t.size == 0:
            raise DomainError("exposure map must be a non-empty 2-D array")
        if np.any(~(t >= 0)) or not np.all(np.isfinite(t)):
            raise DomainError("exposures must be finite and >= 0")
        self.thetas = t

    @property
    def height(self) -> int:
        return self.thetas.shape[0]

    @property
    def width(self) -> int:
        return self.thetas.shape[1]

    @classmethod
    def uniform(cls, width: int, height: int, theta: float) -> "ExposureMap":
        return cls(np.full((height, width), float(theta)))

    @classmethod
    def from_image(cls, image: np.ndarray, theta_max: float,
                   maxval: Optional[int] = None) -> "ExposureMap":
        """Map 8/16-bit gray levels linearly onto ``[0, theta_max]`` (no gamma)."""
        img = np.asarray(image)
        if maxval is None:
            maxval = 65535 if img.dtype == np.uint16 else 255
        return cls(img.astype(np.float64) * (float(theta_max) / maxval))

    @classmethod
    def from_pgm(cls, path: PathLike, theta_max: float) -> "ExposureMap":
        img, maxval = io.read_pgm(path)
        return cls.from_image(img, theta_max, maxval)

    @classmethod
    def test_pattern(cls, width: int, height: int, theta_max: float) -> "ExposureMap":
        """Smooth synthetic scene spanning ``[0, theta_max]``: a ramp plus soft disks."""
        y, x = np.mgrid[0:height, 0:width].astype(np.float64)
        u = x / max(width - 1, 1)
        v = y / max(height - 1, 1)
        scene = 0.55 * u + 0.15 * (1.0 + np.cos(2.0 * math.pi * 1.5 * v)) / 2.0
        for cx, cy, r, amp in ((0.3, 0.35, 0.18, 0.45), (0.72, 0.65, 0.22, -0.35),
                               (0.55, 0.2, 0.1, 0.3)):
            d2 = (u - cx) ** 2 + (v - cy) ** 2
            scene += amp * np.exp(-d2 / (2.0 * r * r))
        scene -= scene.min()
        scene /= scene.max()
        return cls(scene * float(theta_max))


@dataclass
class FrameStack:
    """N bit-packed binary frames: frame-major, row-major, LSB-first, byte-padded per frame."""
    width: int
    height: int
    n_frames: int
    bits: np.ndarray
    config: QisConfig
    divide_exposure: bool = True
    seed: int = 0

    def __post_init__(self):
        nbytes = (self.width * self.height + 7) // 8
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.bits.shape != (self.n_frames, nbytes):
            raise ValueError(f"bits shape {self.bits.shape} != {(self.n_frames, nbytes)}")
        if self.config.n_frames != self.n_frames:
            raise ValueError("config.n_frames disagrees with the stack")

    @property
    def npix(self) -> int:
        return self.width * self.height

    def frame(self, k: int) -> np.ndarray:
        """Frame ``k`` unpacked to a boolean (height, width) array."""
        flat = np.unpackbits(self.bits[k], bitorder="little", count=self.npix)
        return flat.reshape(self.height, self.width).astype(bool)

    def ones_count(self) -> np.ndarray:
        """Number of ones per pixel across all frames, shape (height, width)."""
        counts = np.zeros(self.npix, dtype=np.int64)
        step = max(1, (1 << 24) // max(self.npix, 1))
        for f0 in range(0, self.n_frames, step):
            block = np.unpackbits(self.bits[f0:f0 + step], axis=1, bitorder="little",
                                  count=self.npix)
            counts += block.sum(axis=0, dtype=np.int64)
        return counts.reshape(self.height, self.width)

    def mean_bits(self) -> np.ndarray:
        """The per-pixel sufficient statistic: fraction of ones."""
        return self.ones_count() / self.n_frames

    def to_bytes(self) -> bytes:
        p = self.config.params
        return io.pack_qbf(self.width, self.height, self.n_frames, p.sigma, p.q,
                           self.seed, self.divide_exposure, self.bits)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FrameStack":
        d = io.unpack_qbf(data)
        cfg = QisConfig(SensorParams(d["sigma"], d["q"]), d["n_frames"])
        return cls(d["width"], d["height"], d["n_frames"], d["bits"], cfg,
                   d["divided"], d["seed"])

    def save(self, path: PathLike) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: PathLike) -> "FrameStack":
        return cls.from_bytes(Path(path).read_bytes())

    def __eq__(self, other):
        if not isinstance(other, FrameStack):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()


@dataclass
class EstimateMap:
    theta_hats: np.ndarray
    saturated_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta_hats = np.asarray(self.theta_hats, dtype=np.float64)
        if self.saturated_mask is None:
            self.saturated_mask = np.zeros(self.theta_hats.shape, dtype=bool)
        self.saturated_mask = np.asarray(self.saturated_mask, dtype=bool)

    @property
    def height(self) -> int:
        return self.theta_hats.shape[0]

    @property
    def width(self) -> int:
        return self.theta_hats.shape[1]


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_voltage(theta, sigma: float, seed, size: Optional[int] = None, *,
                   offset: int = 0, num_threads: Optional[int] = None):
    """Draws of ``Poisson(theta) + Normal(0, sigma^2)``.

    With ``size=None`` and scalar ``theta`` a single float is returned;
    otherwise one draw per element (``size`` copies of a scalar ``theta``).
    Draw ``i`` is keyed by counter index ``offset + i``.
    """
    scalar = size is None and np.ndim(theta) == 0
    th = np.asarray(theta, dtype=np.float64).ravel()
    if size is not None:
        if th.size != 1:
            raise ValueError("size is only allowed with a scalar theta")
        th = np.full(int(size), th[0])
    if np.any(~(th >= 0)):
        raise DomainError("theta must be >= 0")
    if not sigma >= 0:
        raise DomainError("sigma must be >= 0")
    out = _kernels.voltages(th, np.exp(-th), float(sigma), _seed(seed), 0, int(offset),
                            num_threads=_threads(num_threads))
    return float(out[0]) if scalar else out


def capture_qis(exposure: ExposureMap, config: QisConfig, seed, *,
                divide_exposure: bool = True, num_threads: Optional[int] = None) -> FrameStack:
    """Capture N thresholded frames; each frame sees ``theta/N`` (or ``theta`` if not divided)."""
    seed = _seed(seed)
    n = config.n_frames
    per_frame = exposure.thetas.ravel() / n if divide_exposure else exposure.thetas.ravel().copy()
    bits = _kernels.threshold_frames(per_frame, np.exp(-per_frame), config.params.sigma,
                                     config.params.q, seed, n,
                                     num_threads=_threads(num_threads))
    return FrameStack(exposure.width, exposure.height, n, bits, config, divide_exposure, seed)


def capture_cis(exposure: ExposureMap, config: CisConfig, seed, *,
                num_threads: Optional[int] = None) -> np.ndarray:
    """One full-exposure CIS frame, clamped to ``[0, FWC]`` and passed through the ADC."""
    th = exposure.thetas.ravel()
    x = _kernels.voltages(th, np.exp(-th), config.sigma, _seed(seed), 0, 0,
                          num_threads=_threads(num_threads))
    x = np.clip(x, 0.0, config.fwc)
    if config.adc_bits is not None:
        x = adc_quantize(x, config)
    return x.reshape(exposure.height, exposure.width)


# ---------------------------------------------------------------------------
# maximum-likelihood reconstruction
# ---------------------------------------------------------------------------

def invert_bit_density(ybar: float, params: SensorParams) -> float:
    """Per-frame exposure whose bit density equals ``ybar``.

    Returns 0 at or below the read-noise false-positive floor ``Phi(-q/sigma)``
    and raises for ``ybar >= 1`` where no finite exposure exists.
    """
    ybar = float(ybar)
    if not 0.0 <= ybar < 1.0:
        raise DomainError(f"mean bit value must lie in [0, 1), got {ybar!r}")
    sigma, q = params.sigma, params.q
    if sigma == 0.0 and q <= 1.0:
        return -math.log1p(-ybar)
    floor = 0.0 if sigma == 0.0 else normal_cdf(-q / sigma)
    if ybar <= floor:
        return 0.0

    def excess(t: float) -> float:
        return (floor if t == 0.0 else bit_density(t, params)) - ybar

    hi = 1.0
    while excess(hi) <= 0.0:
        hi *= 2.0
    return brent(excess, 0.0, hi, xtol=1e-300, rtol=1e-15)


@lru_cache(maxsize=64)
def _mle_table_cached(n_frames: int, sigma: float, q: float,
                      divide_exposure: bool) -> tuple[np.ndarray, np.ndarray]:
    params = SensorParams(sigma, q)
    counts = np.arange(n_frames + 1)
    saturated = counts == n_frames
    ybar = np.where(saturated, 1.0 - 0.5 / n_frames, counts / n_frames)
    per_frame = np.array([invert_bit_density(y, params) for y in ybar])
    table = per_frame * (n_frames if divide_exposure else 1)
    table.setflags(write=False)
    saturated.setflags(write=False)
    return table, saturated


def mle_table(n_frames: int, params: SensorParams,
              divide_exposure: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Exposure estimate and saturation flag for each possible ones-count ``0..N``.

    The count fully determines the estimate, so reconstruction is a lookup.
    Counts below the read-noise false-positive floor map to 0; an all-ones
    pixel is treated as ``1 - 1/(2N)`` and flagged.
    """
    return _mle_table_cached(int(n_frames), float(params.sigma), float(params.q),
                             bool(divide_exposure))


def reconstruct_mle(stack: FrameStack) -> EstimateMap:
    table, sat = mle_table(stack.n_frames, stack.config.params, stack.divide_exposure)
    counts = stack.ones_count()
    return EstimateMap(table[counts], sat[counts])


def trial_estimates(theta: float, config: QisConfig, trials: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Independent capture+reconstruct cycles of one pixel at constant exposure."""
    n = config.n_frames
    per_frame = np.full(int(trials), float(theta) / n)
    counts = _kernels.count_ones(per_frame, np.exp(-per_frame), config.params.sigma,
                                 config.params.q, _seed(seed), n,
                                 num_threads=_threads(None))
    table, sat = mle_table(n, config.params)
    return table[counts], sat[counts]


def empirical_snr(theta: float, config: QisConfig, trials: int, seed) -> float:
    """``theta / RMSE`` of the ML estimate over ``trials`` independent captures."""
    if trials < MIN_TRIALS:
        raise DomainError(f"need at least {MIN_TRIALS} trials")
    est, sat = trial_estimates(theta, config, trials, seed)
    if np.all(sat):
        raise SaturationError(f"all {trials} trials saturated at theta={theta}")
    rmse = math.sqrt(float(np.mean((est - theta) ** 2)))
    return math.inf if rmse == 0.0 else theta / rmse


def empirical_bit_density(theta: float, params: SensorParams, trials: int, seed) -> float:
    """Relative frequency of ones over ``trials`` single-frame draws at exposure ``theta``."""
    if trials < MIN_TRIALS:
        raise DomainError(f"need at least {MIN_TRIALS} trials")
    th = np.full(int(trials), float(theta))
    ones = _kernels.count_ones(th, np.exp(-th), params.sigma, params.q, _seed(seed), 1,
                               num_threads=_threads(None))
    return float(ones.sum()) / trials


def binomial_interval(p: float, n: int, z: float = 3.0) -> tuple[float, float]:
    """Normal-approximation interval ``p +- z sqrt(p(1-p)/n)`` (z = 3 is 99.7%)."""
    half = z * math.sqrt(p * (1.0 - p) / n)
    return p - half, p + half


def image_metrics(truth: ExposureMap, estimate: EstimateMap) -> dict:
    """Reconstruction error against the true exposure.

    ``mse``/``psnr`` skip saturated pixels. ``mse_all``/``psnr_all`` score
    every pixel, saturated ones at their clamped estimate, which keeps a
    capture that saturates half the scene from looking better than it is.
    PSNR is relative to the truth's peak exposure; an exact match gives inf.
    """
    if truth.thetas.shape != estimate.theta_hats.shape:
        raise ValueError(f"shape mismatch {truth.thetas.shape} vs {estimate.theta_hats.shape}")
    peak = float(truth.thetas.max())

    def psnr(mse: float) -> float:
        if mse == 0.0:
            return math.inf
        return -math.inf if peak == 0.0 else 10.0 * math.log10(peak * peak / mse)

    err2 = (estimate.theta_hats - truth.thetas) ** 2
    keep = ~estimate.saturated_mask
    mse_all = float(np.mean(err2))
    mse = float(np.mean(err2[keep])) if np.any(keep) else math.nan
    return {
        "mse": mse,
        "psnr": psnr(mse) if np.any(keep) else math.nan,
        "mse_all": mse_all,
        "psnr_all": psnr(mse_all),
        "saturated_fraction": float(np.mean(estimate.saturated_mask)),
    }
