"""JIT backend selection.

Hot kernels are compiled with numba when it is importable and the
``SASP_DISABLE_JIT`` environment variable is unset (or ``0``). Otherwise the
pure-numpy implementations in :mod:`sasp.kernels` are used.
"""
import os

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None
    HAVE_NUMBA = False


def _flag(name):
    return os.environ.get(name, "0").strip().lower() not in ("", "0", "false", "no")


JIT_DISABLED = _flag("SASP_DISABLE_JIT") or not HAVE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise.

    The returned function is always the numba dispatcher when numba imports,
    independent of ``JIT_DISABLED``, so benchmarks and tests can compare both
    paths in one process. Selection between the two happens in
    :mod:`sasp.kernels`.
    """
    if HAVE_NUMBA:
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def thread_count():
    """Worker cap from ``SASP_THREADS`` (0 or unset = auto)."""
    try:
        n = int(os.environ.get("SASP_THREADS", "0"))
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n
