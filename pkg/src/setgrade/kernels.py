"""Kernel backend selection.

Two interchangeable backends implement the hot kernels: the compiled
Cython extension (`setgrade._ckernels`) and the numpy fallback
(`setgrade._kernels_py`). The compiled one is preferred when importable;
SETGRADE_BACKEND=python|compiled forces the choice. Selection happens
once at import; `set_backend` exists for benchmarks and backend-parity
tests.

The two backends may differ in the last float bits (BLAS vs fixed
row-major summation) but each is individually deterministic, which is
what the reproducibility contracts require.
"""

import os

from . import _kernels_py
from .errors import ConfigError

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = {"python": _kernels_py}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

active = _kernels_py


def available_backends():
    return sorted(_BACKENDS)


def backend_module(name):
    """Look up a backend module by name without switching the active one."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ConfigError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None


def set_backend(name):
    """Switch the active kernel backend; returns the backend module."""
    global active
    try:
        active = _BACKENDS[name]
    except KeyError:
        raise ConfigError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None
    return active


def _initial_backend():
    requested = os.environ.get("SETGRADE_BACKEND", "").strip().lower()
    if requested:
        return requested
    return "compiled" if "compiled" in _BACKENDS else "python"


set_backend(_initial_backend())
