"""Backend selection for the hot numeric kernels.

Kernels are compiled with numba when it is importable, unless the
``SGT_DISABLE_NUMBA`` environment variable is set to a non-empty value other
than ``0``.  Every kernel also has a pure-numpy twin, and callers may request a
backend explicitly with ``backend="numba"`` or ``backend="numpy"``.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
NUMBA_DISABLED = os.environ.get("SGT_DISABLE_NUMBA", "") not in ("", "0")
DEFAULT_BACKEND = "numba" if HAVE_NUMBA and not NUMBA_DISABLED else "numpy"

BACKENDS = ("numba", "numpy")


def njit(**options):
    """``numba.njit`` when numba is installed, otherwise the identity decorator."""

    def wrap(func):
        if not HAVE_NUMBA:
            return func
        return numba.njit(**options)(func)

    return wrap


def resolve_backend(backend=None):
    if backend is None:
        return DEFAULT_BACKEND
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
