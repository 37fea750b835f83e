import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qisim.io import (FormatError, pack_qbf, read_pgm, read_qmap, unpack_qbf, write_pgm,
                      write_qmap)


def test_qbf_layout():
    bits = np.array([[0b00000101, 0b1], [0xFF, 0]], dtype=np.uint8)
    data = pack_qbf(3, 3, 2, 0.2, 0.5, 42, True, bits)
    assert data[:4] == b"QBF1"
    assert struct.unpack_from("<IIIddQB", data, 4) == (3, 3, 2, 0.2, 0.5, 42, 1)
    assert len(data) == 41 + 4
    assert data[41:] == bytes([5, 1, 255, 0])


def test_qbf_round_trip():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 256, (5, 8), dtype=np.uint8)
    d = unpack_qbf(pack_qbf(8, 8, 5, 0.15, 0.7, 2 ** 64 - 1, False, bits))
    assert (d["width"], d["height"], d["n_frames"]) == (8, 8, 5)
    assert (d["sigma"], d["q"], d["seed"], d["divided"]) == (0.15, 0.7, 2 ** 64 - 1, False)
    assert np.array_equal(d["bits"], bits)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 6), st.floats(0, 5),
       st.floats(0.01, 5), st.integers(0, 2 ** 64 - 1), st.booleans(), st.randoms())
def test_qbf_round_trip_property(w, h, n, sigma, q, seed, divided, rnd):
    npix = w * h
    flat = np.array([[rnd.random() < 0.5 for _ in range(npix)] for _ in range(n)], dtype=np.uint8)
    bits = np.packbits(flat, axis=1, bitorder="little")
    data = pack_qbf(w, h, n, sigma, q, seed, divided, bits)
    d = unpack_qbf(data)
    assert np.array_equal(d["bits"], bits)
    assert pack_qbf(d["width"], d["height"], d["n_frames"], d["sigma"], d["q"], d["seed"],
                    d["divided"], d["bits"]) == data


def test_qbf_errors():
    good = pack_qbf(3, 3, 1, 0.0, 0.5, 0, True, np.zeros((1, 2), np.uint8))
    with pytest.raises(FormatError):
        unpack_qbf(good[:20])
    with pytest.raises(FormatError):
        unpack_qbf(b"XBF1" + good[4:])
    with pytest.raises(FormatError):
        unpack_qbf(good + b"\0")
    with pytest.raises(FormatError):
        unpack_qbf(good[:-1] + b"\x80")  # padding bit set
    with pytest.raises(FormatError):
        unpack_qbf(good[:40] + b"\x02" + good[41:])
    with pytest.raises(FormatError):
        pack_qbf(3, 3, 2, 0.0, 0.5, 0, True, np.zeros((1, 2), np.uint8))


@pytest.mark.parametrize("maxval,dtype", [(255, np.uint8), (65535, np.uint16), (1023, np.uint16)])
def test_pgm_round_trip(tmp_path, maxval, dtype):
    img = (np.arange(35).reshape(5, 7) * (maxval // 34)).astype(dtype)
    write_pgm(tmp_path / "x.pgm", img, maxval)
    back, mv = read_pgm(tmp_path / "x.pgm")
    assert mv == maxval and back.dtype == dtype
    assert np.array_equal(back, img)


def test_pgm_sixteen_bit_is_big_endian(tmp_path):
    write_pgm(tmp_path / "x.pgm", np.array([[258]]), 65535)
    assert (tmp_path / "x.pgm").read_bytes().endswith(b"\x01\x02")


def test_pgm_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 # width\n1\n255\n\x07\x09")
    img, mv = read_pgm(p)
    assert mv == 255 and img.tolist() == [[7, 9]]


def test_pgm_errors(tmp_path):
    p = tmp_path / "e.pgm"
    p.write_bytes(b"P2\n1 1\n255\n1")
    with pytest.raises(FormatError):
        read_pgm(p)
    p.write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(FormatError):
        read_pgm(p)
    p.write_bytes(b"P5\n2 2\n0\n\x00")
    with pytest.raises(FormatError):
        read_pgm(p)
    p.write_bytes(b"P5\n2")
    with pytest.raises(FormatError):
        read_pgm(p)
    with pytest.raises(FormatError):
        write_pgm(p, np.array([[300]]), 255)
    with pytest.raises(FormatError):
        write_pgm(p, np.zeros(3), 255)


def test_qmap_round_trip(tmp_path):
    vals = np.random.default_rng(1).normal(size=(4, 6))
    write_qmap(tmp_path / "m.qmap", vals)
    data = (tmp_path / "m.qmap").read_bytes()
    assert data[:4] == b"QMAP" and struct.unpack_from("<II", data, 4) == (6, 4)
    assert len(data) == 16 + 24 * 8
    assert np.array_equal(read_qmap(tmp_path / "m.qmap"), vals)


def test_qmap_errors(tmp_path):
    p = tmp_path / "m.qmap"
    p.write_bytes(b"QMA")
    with pytest.raises(FormatError):
        read_qmap(p)
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(FormatError):
        read_qmap(p)
    write_qmap(p, np.zeros((2, 2)))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(FormatError):
        read_qmap(p)
    with pytest.raises(FormatError):
        write_qmap(p, np.zeros(3))
