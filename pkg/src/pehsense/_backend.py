"""Kernel backend selection.

Set ``PEHSENSE_BACKEND=numpy`` to force the pure-numpy kernels; the default
is ``numba`` whenever numba imports cleanly.
"""
import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_requested = os.environ.get("PEHSENSE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"PEHSENSE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and HAS_NUMBA) else "numpy"
