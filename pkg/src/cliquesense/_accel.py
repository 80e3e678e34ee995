"""Numba switch for the hot kernels.

Kernels are written in the numba-compatible subset of Python and wrapped with
:func:`kernel`. Setting ``CLIQUESENSE_DISABLE_NUMBA=1`` (or running without
numba installed) leaves them as plain Python operating on numpy arrays, which
is the reference fallback path. Both paths produce bit-identical results for
the integer/random-stream parts of every kernel.
"""
import contextlib
import os

import numpy as np

ENV_FLAG = "CLIQUESENSE_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get(ENV_FLAG, "0").lower() not in ("1", "true", "yes")


def kernel(fn):
    """Compile ``fn`` with ``numba.njit`` unless the fallback path is selected."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def python_impl(fn):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(fn, "py_func", fn)


@contextlib.contextmanager
def fallback_errstate():
    # numpy scalar uint64 arithmetic warns on the wraparound the generator relies on
    with np.errstate(over="ignore"):
        yield


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
