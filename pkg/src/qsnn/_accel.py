"""Backend switch for the compiled kernels.

Every hot loop in :mod:`qsnn.kernels` has a numba version and a pure-numpy
twin that produces the same numbers. The numba path is used when numba is
importable, unless ``QSNN_DISABLE_NUMBA`` is set to a truthy value.
"""

from __future__ import annotations

import os

_FLAG = "QSNN_DISABLE_NUMBA"


def _env_disabled() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(func):
    """Compile ``func`` in nopython mode, or return it untouched without numba.

    ``error_model="numpy"`` gives numpy's float division semantics and lets
    the loops vectorize.
    """
    if _numba is None:
        return func
    return _numba.njit(cache=True, nogil=True, error_model="numpy")(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
