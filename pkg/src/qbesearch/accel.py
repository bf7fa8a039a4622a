"""Backend selection for the hot numeric kernels.

Two implementations exist for every loop-bound kernel: a numba ``@njit``
version and a pure-numpy fallback.  The active backend is chosen at import
time from the ``QBE_NUMBA`` environment variable (set it to ``0``, ``off``
or ``false`` to force the numpy path) and can be switched at runtime with
:func:`set_backend`, which the tests and the kernel benchmark use.
"""

import os

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


_FALSEY = {"0", "off", "false", "no"}


def _env_wants_numba():
    return os.environ.get("QBE_NUMBA", "1").strip().lower() not in _FALSEY


_use_numba = NUMBA_AVAILABLE and _env_wants_numba()


def numba_enabled():
    """True when kernels dispatch to their compiled numba versions."""
    return _use_numba


def set_backend(name):
    """Select the kernel backend: ``"numba"`` or ``"numpy"``."""
    global _use_numba
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba backend requested but numba is not importable")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}, expected 'numba' or 'numpy'")


def current_backend():
    return "numba" if _use_numba else "numpy"
