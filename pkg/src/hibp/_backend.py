"""Kernel backend selection.

The hot batch kernels (sum-product sweeps, attention-block execution) exist
twice: numba-compiled loops and a pure-numpy vectorized fallback. The
HIBP_BACKEND environment variable picks one ("numba" or "numpy"); unset, we
use numba when importable and fall back to numpy otherwise. Both backends
produce equal results up to float summation order.
"""

from __future__ import annotations

import os

from . import _kernels_numpy

_FORCED = os.environ.get("HIBP_BACKEND", "").strip().lower()

if _FORCED not in ("", "numba", "numpy"):
    raise RuntimeError(f"HIBP_BACKEND must be 'numba' or 'numpy', got {_FORCED!r}")

if _FORCED == "numpy":
    _impl = _kernels_numpy
    _name = "numpy"
else:
    try:
        from . import _kernels_numba as _impl

        _name = "numba"
    except ImportError:
        if _FORCED == "numba":
            raise
        _impl = _kernels_numpy
        _name = "numpy"


def backend_name() -> str:
    return _name


def bp_batch(*args, **kwargs):
    return _impl.bp_batch(*args, **kwargs)


def embed_blocks(*args, **kwargs):
    return _impl.embed_blocks(*args, **kwargs)


def set_threads(n: int) -> None:
    """Cap worker threads for the parallel numba kernels; no-op on numpy."""
    if _name == "numba":
        import numba

        numba.set_num_threads(max(1, int(n)))
