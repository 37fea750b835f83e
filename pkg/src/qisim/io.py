"""File formats: bit-packed frame stacks (.qbf), binary PGM, float rasters (QMAP)."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "QBF_MAGIC",
    "QMAP_MAGIC",
    "FormatError",
    "pack_qbf",
    "unpack_qbf",
    "read_pgm",
    "write_pgm",
    "read_qmap",
    "write_qmap",
]

PathLike = Union[str, Path]

QBF_MAGIC = b"QBF1"
# width, height, n_frames, sigma, q, seed, exposure-division flag
_QBF_HEADER = struct.Struct("<4sIIIddQB")
QMAP_MAGIC = b"QMAP"
# magic, width, height, reserved (pads the header to 16 bytes)
_QMAP_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Malformed or unsupported file contents."""


def pack_qbf(width: int, height: int, n_frames: int, sigma: float, q: float,
             seed: int, divided: bool, bits: np.ndarray) -> bytes:
    nbytes = (width * height + 7) // 8
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.shape != (n_frames, nbytes):
        raise FormatError(f"payload shape {bits.shape} != {(n_frames, nbytes)}")
    head = _QBF_HEADER.pack(QBF_MAGIC, width, height, n_frames, float(sigma), float(q),
                            int(seed) & 0xFFFFFFFFFFFFFFFF, 1 if divided else 0)
    return head + bits.tobytes()


def unpack_qbf(data: bytes) -> dict:
    if len(data) < _QBF_HEADER.size:
        raise FormatError("truncated QBF header")
    magic, w, h, n, sigma, q, seed, flag = _QBF_HEADER.unpack_from(data)
    if magic != QBF_MAGIC:
        raise FormatError(f"bad QBF magic {magic!r}")
    if flag not in (0, 1):
        raise FormatError(f"bad exposure-division flag {flag}")
    nbytes = (w * h + 7) // 8
    payload = data[_QBF_HEADER.size:]
    if len(payload) != n * nbytes:
        raise FormatError(f"QBF payload has {len(payload)} bytes, expected {n * nbytes}")
    bits = np.frombuffer(payload, dtype=np.uint8).reshape(n, nbytes).copy()
    pad = nbytes * 8 - w * h
    if pad and np.any(bits[:, -1] >> (8 - pad)):
        raise FormatError("non-zero padding bits in QBF payload")
    return dict(width=w, height=h, n_frames=n, sigma=sigma, q=q, seed=seed,
                divided=bool(flag), bits=bits)


# ---------------------------------------------------------------------------
# PGM (P5)
# ---------------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, i, n = [], 0, len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1  # a single whitespace byte ends the header


def read_pgm(path: PathLike) -> tuple[np.ndarray, int]:
    """Read a binary PGM. Returns ``(image, maxval)``; 16-bit samples are big-endian."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), start = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise FormatError(f"only binary PGM (P5) is supported, got {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise FormatError(f"bad PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    body = data[start:start + need]
    if len(body) != need:
        raise FormatError("truncated PGM raster")
    return np.frombuffer(body, dtype=dtype).reshape(h, w).astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path: PathLike, image: np.ndarray, maxval: int = 255) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise FormatError("PGM needs a 2-D image")
    if not 0 < maxval < 65536:
        raise FormatError(f"bad PGM maxval {maxval}")
    if np.any(img < 0) or np.any(img > maxval):
        raise FormatError("pixel values outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = img.shape
    head = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(head + img.astype(dtype).tobytes())


# ---------------------------------------------------------------------------
# QMAP: flat little-endian float64 raster
# ---------------------------------------------------------------------------

def write_qmap(path: PathLike, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype="<f8")
    if arr.ndim != 2:
        raise FormatError("QMAP needs a 2-D array")
    h, w = arr.shape
    Path(path).write_bytes(_QMAP_HEADER.pack(QMAP_MAGIC, w, h, 0) + arr.tobytes())


def read_qmap(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _QMAP_HEADER.size:
        raise FormatError("truncated QMAP header")
    magic, w, h, _ = _QMAP_HEADER.unpack_from(data)
    if magic != QMAP_MAGIC:
        raise FormatError(f"bad QMAP magic {magic!r}")
    body = data[_QMAP_HEADER.size:]
    if len(body) != 8 * w * h:
        raise FormatError("QMAP raster size does not match its header")
    return np.frombuffer(body, dtype="<f8").reshape(h, w).astype(np.float64)
