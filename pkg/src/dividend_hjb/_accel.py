"""Numba dispatch.

Hot kernels are written twice: an ``@njit`` scalar-loop version and a
vectorised numpy version. ``DIVIDEND_HJB_NUMBA=0`` forces the numpy path
even when numba is importable.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # avoids probing an outdated TBB; results never depend on the layer
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    flag = os.environ.get("DIVIDEND_HJB_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


prange = numba.prange if HAVE_NUMBA else range


def thread_cap() -> int:
    """Thread count honouring ``DIVIDEND_HJB_THREADS`` (default: all cores)."""
    available = numba.config.NUMBA_NUM_THREADS if HAVE_NUMBA else (os.cpu_count() or 1)
    raw = os.environ.get("DIVIDEND_HJB_THREADS", "").strip()
    if not raw:
        return available
    try:
        requested = int(raw)
    except ValueError:
        return available
    return max(1, min(requested, available))


def apply_thread_cap() -> int:
    n = thread_cap()
    if HAVE_NUMBA:
        numba.set_num_threads(n)
    return n
