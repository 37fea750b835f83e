"""Acceptance criteria, each at its stated tolerance, one summary line per criterion."""

import math
from fractions import Fraction

import numpy as np
import pytest

from qisim import design, model, sim
from qisim.design import UNBOUNDED, BracketSchedule
from qisim.model import CisConfig, QisConfig, SensorParams
from qisim.specfun import lambert_w0
from qisim.validation import FIG8_FRAMES, fig8_sweep, integer_frame_optimum

SEED = 20240601


def test_c01_exposure_constant(report):
    c = 2 + lambert_w0(-2 * math.exp(-2))
    ok = abs(c - 1.5936) <= 1e-4 and design.optimal_exposure(1, 0.0) == c
    report(1, "optimal exposure constant", ok, f"{c:.7f}", "1.5936 +- 1e-4")
    assert ok


def test_c02_frame_constants(report):
    table = {0.1: 1321, 0.15: 34.5, 0.2: 9.30, 0.25: 5.01, 0.3: 3.56}
    got = {s: design.frame_constant(s) for s in table}
    ok = all(abs(got[s] / k - 1) <= 0.01 for s, k in table.items())
    ok = ok and design.frame_constant(0.0) is UNBOUNDED
    shown = ", ".join(f"{got[s]:.4g}" for s in table)
    report(2, "frame constants", ok, f"[{shown}], sigma=0 unbounded",
           "[1321, 34.5, 9.30, 5.01, 3.56] rel 1%")
    assert ok


def test_c03_worked_frames(report):
    n = design.optimal_frames(20, 0.2)
    ok = round(n) == 186
    report(3, "optimal frames at theta=20, sigma=0.2", ok, f"{n:.3f}", "rounds to 186")
    assert ok


def test_c04_dynamic_range(report):
    qis = design.dynamic_range_qis(1000, 0.19).dr_db
    br = design.dynamic_range_bracket(BracketSchedule((4, 1, Fraction(1, 4), Fraction(1, 16),
                                                       Fraction(1, 64)), 1000), 0.19)
    kn = design.dynamic_range_qis(5000, 0.19).dr_db
    cis = design.dynamic_range_cis(CisConfig(2.0, 5000.0)).dr_db
    got = [qis, br.bracket_term_db, br.dr_db, kn, cis]
    want = [73.07, 48.16, 121.24, 82.51, 67.96]
    gain = 10 ** ((br.dr_db - cis) / 20)
    ok = all(abs(g - w) <= 0.05 for g, w in zip(got, want)) and abs(gain / 461.32 - 1) <= 0.01
    report(4, "dynamic range quartet (dB) and gain", ok,
           "[" + ", ".join(f"{g:.4f}" for g in got) + f"], gain {gain:.2f}",
           "[73.07, 48.16, 121.24, 82.51, 67.96] +- 0.05, 461.32 rel 1%")
    assert ok


def test_c05_read_noise_constants(report):
    got = [model.read_noise_delta(0.2), model.omega_of_sigma(0.2), model.omega_of_sigma(0.19)]
    want = [0.0062, 0.9938, 0.9958]
    ok = all(abs(g - w) <= 1e-4 for g, w in zip(got, want))
    report(5, "delta(0.2), omega(0.2), omega(0.19)", ok,
           "[" + ", ".join(f"{g:.6f}" for g in got) + "]", "[0.0062, 0.9938, 0.9958] +- 1e-4")
    assert ok


def test_c06_series_vs_closed_form(report):
    worst = 0.0
    for n in (1, 256):
        for sigma in (0.1, 0.15, 0.2):
            cfg = QisConfig.make(n, sigma)
            for r in np.logspace(-3, math.log10(5), 200):
                a = model.snr_qis(r * n, cfg)
                b = model.snr_qis_approx(r * n, cfg)
                worst = max(worst, abs(a / b - 1))
    ok = worst < 0.01
    report(6, "series vs closed-form SNR, max relative gap", ok, f"{worst:.5f}", "< 0.01")
    assert ok


def test_c07_bit_density_monte_carlo(report):
    trials = 10 ** 6
    worst, ok, i = 0.0, True, 0
    for theta in (0.1, 1.0, 5.0):
        for sigma in (0.0, 0.1, 0.2, 0.3):
            p = SensorParams(sigma, 0.5)
            mu = model.bit_density(theta, p)
            f = sim.empirical_bit_density(theta, p, trials, SEED + i)
            half = 3 * math.sqrt(mu * (1 - mu) / trials)
            worst = max(worst, abs(f - mu) / half)
            ok = ok and abs(f - mu) <= half
            i += 1
    report(7, "empirical bit density at 12 points", ok,
           f"worst deviation {worst:.3f} CI half-widths", "inside 99.7% binomial CI")
    assert ok


def test_c08_estimator_efficiency(report):
    cfg = QisConfig.make(256, 0.19)
    emp = sim.empirical_snr(8.0, cfg, 10 ** 5, SEED)
    ref = model.snr_qis(8.0, cfg)
    rel = emp / ref - 1
    ok = abs(rel) <= 0.10
    report(8, "empirical SNR at theta=8, N=256, sigma=0.19", ok, f"{emp:.4f} ({rel:+.2%})",
           f"{ref:.4f} rel 10%")
    assert ok


def test_c09_brute_force_optimum(report):
    rng = np.random.default_rng(SEED)
    offsets = []
    for _ in range(20):
        sigma = float(rng.uniform(0.05, 0.3))
        theta = float(rng.uniform(1, 100))
        offsets.append(integer_frame_optimum(theta, sigma) - round(design.optimal_frames(theta, sigma)))
    worst = max(abs(o) for o in offsets)
    ok = worst <= 1
    report(9, "integer sweep vs rounded optimal frames, 20 pairs", ok, f"max offset {worst}",
           "+-1 frame")
    assert ok


def test_c10_crossings_and_decomposition(report):
    worst_unit = 0.0
    for n in (2, 10, 1000, 5000, 10 ** 5):
        for sigma in (0.05, 0.1, 0.19, 0.3):
            cfg = QisConfig.make(n, sigma)
            try:
                crossings = design.snr_unity_crossings(n, sigma)
            except design.NoCrossingError:
                continue
            for t in crossings:
                worst_unit = max(worst_unit, abs(model.snr_qis_approx(t, cfg) - 1))
    rng = np.random.default_rng(SEED + 1)
    worst_sum = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 8))
        taus = [float(x) for x in 10 ** rng.uniform(-3, 3, k)]
        r = design.dynamic_range_bracket(BracketSchedule(taus, int(rng.integers(2, 10 ** 4))),
                                         float(rng.uniform(0.05, 0.3)))
        worst_sum = max(worst_sum, abs(r.dr_db - r.sensor_term_db - r.bracket_term_db))
    sched = BracketSchedule((4, 1, Fraction(1, 4), Fraction(1, 16), Fraction(1, 64)), 1000)
    rep = design.dynamic_range_bracket(sched, 0.19)
    lo, hi = design.envelope_crossings(sched, 0.19)
    gap = max(abs(20 * math.log10(lo / rep.theta_minus)), abs(20 * math.log10(hi / rep.theta_plus)))
    ok = worst_unit <= 1e-6 and worst_sum <= 1e-9 and gap <= 0.05
    report(10, "unity crossings, DR decomposition, envelope crossings", ok,
           f"{worst_unit:.1e} / {worst_sum:.1e} / {gap:.1e} dB", "1e-6 / 1e-9 / 0.05 dB")
    assert ok


def test_c11_fig8_psnr_ordering(report):
    rows = fig8_sweep(size=128, seed=SEED, frames=FIG8_FRAMES)
    psnr = [r["psnr_all"] for r in rows]
    best = int(np.argmax(psnr))
    ok = 0 < best < len(psnr) - 1 and psnr[-1] < psnr[best]
    shown = ", ".join(f"{n}:{p:.2f}" for n, p in zip(FIG8_FRAMES, psnr))
    report(11, "PSNR over frame count at 128x128", ok, f"{shown}; best N={FIG8_FRAMES[best]}",
           "interior best N, N=4096 below best")
    assert ok
