"""Kernel backend selection.

The recurrent sequence kernels exist twice: a numba ``@njit`` build and a
vectorized pure-numpy fallback.  ``ACORM_BACKEND`` picks one:

* ``auto`` (default) -- numba when importable, else numpy
* ``numba``          -- require numba, fail loudly if missing
* ``numpy``          -- force the fallback (useful for debugging and as the
  reference side of the backend-equivalence tests)
"""

import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_VALID = ("auto", "numba", "numpy")
_mode = os.environ.get("ACORM_BACKEND", "auto").lower()
if _mode not in _VALID:
    raise RuntimeError(f"ACORM_BACKEND must be one of {_VALID}, got {_mode!r}")
if _mode == "numba" and not HAS_NUMBA:
    raise RuntimeError("ACORM_BACKEND=numba but numba is not importable")


def use_numba() -> bool:
    """True when the jitted kernels are active."""
    if _mode == "numpy":
        return False
    return HAS_NUMBA


def backend_name() -> str:
    return "numba" if use_numba() else "numpy"


def set_backend(name: str) -> None:
    """Override the backend at runtime (tests and benchmarks only)."""
    global _mode
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _mode = name
