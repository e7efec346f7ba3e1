"""Numeric kernel backend selection.

The hot inner loops (layer forward/backward, SGD updates, the
winner-take-all loss) exist twice: a numba-jitted implementation and a
pure-numpy fallback.  The active backend is chosen once, at import time,
from the ``EVOPATH_BACKEND`` environment variable:

  EVOPATH_BACKEND=numba   force the jitted kernels (error if numba missing)
  EVOPATH_BACKEND=numpy   force the pure-numpy kernels
  unset                   numba when importable, numpy otherwise

Both backends are deterministic run-to-run; they are numerically
equivalent but not bit-identical to each other, so artifacts record which
backend produced them.
"""

import os

_ENV_VAR = "EVOPATH_BACKEND"

_requested = os.environ.get(_ENV_VAR, "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"{_ENV_VAR} must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    from . import _kernels_numpy as kernels

    _active = "numpy"
else:
    try:
        from . import _kernels_numba as kernels

        _active = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _kernels_numpy as kernels

        _active = "numpy"


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return _active
