"""Monte Carlo kernels with a compiled fast path.

The Cython extension ``_ckernel`` is used when it was built; otherwise the
numpy implementation in ``pykernel`` takes over. Setting ``QISIM_PURE_PYTHON=1``
forces the numpy path. Both produce the same bits for the same seed.
"""

import os

from . import pykernel

BACKEND = "python"
_impl = pykernel

if os.environ.get("QISIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernel
    except ImportError:
        pass
    else:
        _impl = _ckernel
        BACKEND = "cython"

voltages = _impl.voltages
threshold_frames = _impl.threshold_frames
count_ones = _impl.count_ones


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"`` explicitly."""
    if name == "python":
        return pykernel
    if name == "cython":
        from . import _ckernel
        return _ckernel
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list:
    names = ["python"]
    try:
        from . import _ckernel  # noqa: F401
    except ImportError:
        return names
    return names + ["cython"]


__all__ = ["BACKEND", "voltages", "threshold_frames", "count_ones",
           "get_backend", "available_backends"]
