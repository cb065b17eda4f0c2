"""Kernel backend selection.

The hot training kernels exist twice: a compiled Cython/BLAS extension
(``_speedups``) and a pure NumPy fallback with identical semantics. The
compiled one is picked automatically when it imported cleanly; set
ABEXRAT_BACKEND=numpy or ABEXRAT_BACKEND=cython to force a choice.
Results are deterministic within a backend, not bitwise identical across
backends (summation order differs).
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from abexrat.errors import ConfigError

from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}

try:
    from . import _speedups  # type: ignore[attr-defined]

    _BACKENDS["cython"] = _speedups
except ImportError:  # extension not built; NumPy fallback stays in charge
    _speedups = None

_active = None


def available() -> list[str]:
    """Names of importable backends, preferred first."""
    return [name for name in ("cython", "numpy") if name in _BACKENDS]


def select(name: str | None = None):
    """Make `name` (or the best available backend) the active one."""
    global _active
    if name is None:
        name = os.environ.get("ABEXRAT_BACKEND") or available()[0]
    if name not in _BACKENDS:
        raise ConfigError(
            f"unknown or unavailable backend {name!r}; available: {available()}"
        )
    _active = _BACKENDS[name]
    return _active


def active():
    """The currently selected backend module."""
    if _active is None:
        select()
    return _active


@contextmanager
def use(name: str):
    """Temporarily switch backends (tests and benchmarks)."""
    global _active
    previous = active()
    select(name)
    try:
        yield _active
    finally:
        _active = previous
