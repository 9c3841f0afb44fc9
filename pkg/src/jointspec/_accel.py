"""Numba switch.

Set ``JOINTSPEC_DISABLE_NUMBA=1`` before import to run every hot kernel on
its pure-numpy path.
"""

from __future__ import annotations

import os

DISABLE_NUMBA = os.environ.get("JOINTSPEC_DISABLE_NUMBA", "0").lower() in (
    "1",
    "true",
    "yes",
)

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not DISABLE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, else identity.

    Kernels are always compiled when numba exists so that both paths can be
    tested side by side; ``USE_NUMBA`` only controls which one the public
    wrappers dispatch to.
    """
    kwargs.setdefault("cache", True)

    if not HAS_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)
