"""Backend selection for the expectation kernels.

The compiled extension is used when it imports and ``SLHJB_PURE_PYTHON`` is
unset; otherwise the NumPy implementation takes over. ``SLHJB_NUM_THREADS``
sets the OpenMP thread count of the compiled kernels.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("SLHJB_PURE_PYTHON"):
        raise ImportError("pure Python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"

MODE_CODES = {"clamp": 0, "linear": 1, "payoff_asymptotic": 2}


def get(name=None):
    """Kernel module by name; ``None`` gives the active backend."""
    name = name or BACKEND
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} is not available (have {sorted(BACKENDS)})")
    return BACKENDS[name]


def num_threads():
    try:
        return max(1, int(os.environ.get("SLHJB_NUM_THREADS", "1")))
    except ValueError:
        return 1
