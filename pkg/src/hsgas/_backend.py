"""Kernel backend selection.

Hot numerical kernels live in :mod:`hsgas._kernels` and are compiled with
numba's ``@njit`` by default.  Setting the environment variable
``HSGAS_NUMBA=0`` before import runs the exact same source uncompiled
(pure numpy/python), which is slow but semantically identical; this is the
reference path the benchmark and the fallback-equivalence tests compare
against.  If numba is not importable the fallback is selected automatically.
"""

import os

_requested = os.environ.get("HSGAS_NUMBA", "1") != "0"

try:
    import numba

    _have_numba = True
except ImportError:  # pragma: no cover - numba is a hard dependency normally
    numba = None
    _have_numba = False

USING_NUMBA = _requested and _have_numba


def njit_maybe(func=None, **kwargs):
    """``numba.njit`` when the compiled backend is active, identity otherwise.

    All kernels use ``cache=True`` (compile once per environment) and
    ``nogil=True`` (replica threads run kernels concurrently).
    """

    def wrap(f):
        if USING_NUMBA:
            opts = dict(cache=True, nogil=True)
            opts.update(kwargs)
            return numba.njit(**opts)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap


def backend_name():
    return "numba" if USING_NUMBA else "python"
