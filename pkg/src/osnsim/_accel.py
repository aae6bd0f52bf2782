"""Numba switch for the hot kernels.

Set ``OSNSIM_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The flag is
read once at import time.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("OSNSIM_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as _numba
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator.

    Functions decorated here are always compiled when numba is importable, even
    if the env flag is set; the flag only controls which path the dispatchers in
    :mod:`osnsim.kernels` pick.
    """
    if NUMBA_AVAILABLE:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
