"""Batched ODE kernels behind a backend switch (see :mod:`pehsense._backend`)."""
from .._backend import BACKEND
from . import _numpy
from ._tableau import MODE_LINEAR, MODE_RECTIFIER, MODE_SOURCE

if BACKEND == "numba":
    from . import _numba as _impl
else:
    _impl = _numpy

integrate_batch = _impl.integrate_batch
bridge_current = _impl.bridge_current


def get_backend(name):
    """Return the kernel module for ``name`` ('numba' or 'numpy')."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ValueError(f"unknown backend {name!r}")


__all__ = [
    "BACKEND",
    "MODE_LINEAR",
    "MODE_RECTIFIER",
    "MODE_SOURCE",
    "bridge_current",
    "get_backend",
    "integrate_batch",
]
