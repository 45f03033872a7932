"""Backend selection for the hot kernels.

Every inner loop in the package exists twice: a numba ``@njit`` version and a
vectorised pure-numpy version. The numba path is the default whenever numba
imports; setting ``SPECGLOSS_PURE_NUMPY=1`` in the environment selects the
numpy path at import time. ``use_numba(False)`` flips it at runtime, which is
what the benchmark and the backend-equivalence tests do.
"""
import os
from contextlib import contextmanager

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip the TBB probe; workqueue is always present and deterministic
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_TRUTHY = ("1", "true", "yes", "on")

_state = {
    "numba": HAVE_NUMBA
    and os.environ.get("SPECGLOSS_PURE_NUMPY", "").strip().lower() not in _TRUTHY
}


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def numba_enabled():
    return _state["numba"]


def use_numba(flag):
    if flag and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _state["numba"] = bool(flag)


@contextmanager
def backend(name):
    """Temporarily run with ``"numba"`` or ``"numpy"`` kernels."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    prev = _state["numba"]
    use_numba(name == "numba")
    try:
        yield
    finally:
        _state["numba"] = prev


def dispatch(jit_impl, np_impl):
    """Return a callable that routes to ``jit_impl`` or ``np_impl`` per call."""

    def call(*args, **kwargs):
        if _state["numba"]:
            return jit_impl(*args, **kwargs)
        return np_impl(*args, **kwargs)

    call.__name__ = np_impl.__name__.removesuffix("_np")
    call.__doc__ = np_impl.__doc__
    call.jit = jit_impl
    call.numpy = np_impl
    return call


def set_threads(n):
    """Set numba's worker count (no-op on the numpy path)."""
    if n is None:
        n = os.environ.get("SPECGLOSS_THREADS")
    if n is None:
        return
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
