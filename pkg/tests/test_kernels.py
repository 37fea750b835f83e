import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from qisim import _kernels
from qisim._kernels import pykernel

BACKENDS = _kernels.available_backends()

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


def inputs(theta):
    theta = np.asarray(theta, dtype=float)
    return theta, np.exp(-theta)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(backend, ctr, key, expected):
    out = _kernels.get_backend(backend).philox4x32(*ctr, *key)
    assert tuple(int(np.asarray(w)) for w in out) == expected


def test_compiled_backend_present():
    assert "cython" in BACKENDS, "compiled kernel was not built"
    assert _kernels.BACKEND == "cython"


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernel not built")


@needs_both
@pytest.mark.parametrize("theta", [0.0, 0.01, 0.7, 5.0, 29.9, 30.0, 45.0, 1e3, 1e6])
@pytest.mark.parametrize("sigma", [0.0, 0.25, 3.0])
def test_backends_identical_voltages(theta, sigma):
    th, p0 = inputs(np.full(2000, theta))
    a = _kernels.get_backend("python").voltages(th, p0, sigma, 99, 3, 17)
    b = _kernels.get_backend("cython").voltages(th, p0, sigma, 99, 3, 17)
    assert np.array_equal(a, b)


@needs_both
def test_backends_identical_frames():
    th, p0 = inputs(np.random.default_rng(0).uniform(0, 60, 1234))
    py, cy = _kernels.get_backend("python"), _kernels.get_backend("cython")
    a = py.threshold_frames(th, p0, 0.2, 0.5, 2 ** 40 + 3, 9)
    b = cy.threshold_frames(th, p0, 0.2, 0.5, 2 ** 40 + 3, 9, num_threads=3)
    assert np.array_equal(a, b)
    a = py.count_ones(th, p0, 0.2, 0.5, 5, 33)
    b = cy.count_ones(th, p0, 0.2, 0.5, 5, 33, num_threads=3)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("backend", BACKENDS)
def test_thread_count_irrelevant(backend):
    k = _kernels.get_backend(backend)
    th, p0 = inputs(np.linspace(0, 50, 5000))
    a = k.threshold_frames(th, p0, 0.3, 0.5, 1, 12, num_threads=1)
    b = k.threshold_frames(th, p0, 0.3, 0.5, 1, 12, num_threads=4)
    assert np.array_equal(a, b)


def test_chunk_size_irrelevant(monkeypatch):
    th, p0 = inputs(np.linspace(0, 50, 3000))
    a = pykernel.threshold_frames(th, p0, 0.3, 0.5, 8, 7)
    c = pykernel.count_ones(th, p0, 0.3, 0.5, 8, 7)
    v = pykernel.voltages(th, p0, 0.3, 8)
    monkeypatch.setattr(pykernel, "CHUNK", 1000)
    assert np.array_equal(pykernel.threshold_frames(th, p0, 0.3, 0.5, 8, 7), a)
    assert np.array_equal(pykernel.count_ones(th, p0, 0.3, 0.5, 8, 7), c)
    assert np.array_equal(pykernel.voltages(th, p0, 0.3, 8), v)


@pytest.mark.parametrize("backend", BACKENDS)
def test_frames_match_voltages(backend):
    k = _kernels.get_backend(backend)
    th, p0 = inputs(np.linspace(0.1, 3, 21))
    bits = k.threshold_frames(th, p0, 0.2, 0.5, 4, 6)
    for f in range(6):
        x = k.voltages(th, p0, 0.2, 4, f)
        assert np.array_equal(np.unpackbits(bits[f], bitorder="little", count=21), x >= 0.5)
    counts = k.count_ones(th, p0, 0.2, 0.5, 4, 6)
    total = np.unpackbits(bits, axis=1, bitorder="little", count=21).sum(axis=0)
    assert np.array_equal(counts, total)


@pytest.mark.parametrize("backend", BACKENDS)
def test_offset_shifts_pixels(backend):
    k = _kernels.get_backend(backend)
    th, p0 = inputs(np.full(10, 2.0))
    a = k.voltages(th, p0, 0.5, 3, 0, 0)
    b = k.voltages(th[:4], p0[:4], 0.5, 3, 0, 6)
    assert np.array_equal(a[6:], b)


def test_pure_python_switch():
    code = "from qisim import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, QISIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"


def test_uniform_words_sanity():
    n = 1 << 18
    idx = np.arange(n, dtype=np.uint64)
    words = pykernel.philox4x32(idx, 0, 0, 0, 1234, 0)
    u = np.concatenate([w.astype(np.float64) / 2 ** 32 for w in words])
    hist = np.histogram(u, 64, (0, 1))[0]
    assert stats.chisquare(hist).pvalue > 1e-4
    # neighbouring counters and the four words of one block are uncorrelated
    w0 = words[0].astype(float)
    for other in (w0[1:], words[1].astype(float)[:-1], words[3].astype(float)[:-1]):
        r = np.corrcoef(w0[:-1], other)[0, 1]
        assert abs(r) < 5 / np.sqrt(n)
