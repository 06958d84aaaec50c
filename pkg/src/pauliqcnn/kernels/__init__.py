"""Hot loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``PAULIQCNN_DISABLE_NUMBA`` is not
set to a truthy value.  ``set_backend`` switches at runtime (tests, benchmarks).
"""

from __future__ import annotations

import os
from contextlib import contextmanager

DISABLE_ENV = "PAULIQCNN_DISABLE_NUMBA"
THREADS_ENV = "PAULIQCNN_THREADS"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes", "on")


_backend = "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"

if HAVE_NUMBA and os.environ.get(THREADS_ENV):
    numba.set_num_threads(int(os.environ[THREADS_ENV]))


def njit(func=None, **options):
    """``numba.njit`` with caching, or the plain function when numba is absent."""
    if func is None:
        return lambda f: njit(f, **options)
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True, **options)(func)


def backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextmanager
def using_backend(name: str):
    prev = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)
