"""Backend dispatch for the hot inner loops.

Set HAZRISK_BACKEND=numpy to force the pure numpy path, HAZRISK_BACKEND=numba
to require the jitted path (import error if numba is unavailable). The default
("auto") uses numba when it imports and falls back to numpy otherwise.
"""

import os

import numpy as np

from . import numpy_impl

_choice = os.environ.get("HAZRISK_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"HAZRISK_BACKEND={_choice!r} not recognized; use auto, numba or numpy"
    )

if _choice == "numpy":
    _impl = numpy_impl
else:
    try:
        from . import numba_impl as _impl
    except ImportError:
        if _choice == "numba":
            raise
        _impl = numpy_impl

BACKEND = _impl.NAME
local_sums = _impl.local_sums
pair_suffix = _impl.pair_suffix
risk_ratio_sum = _impl.risk_ratio_sum


def get_backend(name: str):
    """Return a backend module by name (for benchmarks and tests)."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import numba_impl
        return numba_impl
    raise ValueError(f"unknown backend {name!r}")


_warmed = False


def warmup() -> None:
    """Trigger jit compilation once, before any thread pool fans out."""
    global _warmed
    if _warmed:
        return
    theta = np.zeros(2)
    feats = np.array([[0.1, 0.01], [0.2, 0.04], [-0.1, 0.01]])
    wts = np.array([1.0, 0.5, 0.25])
    fail_feats = feats[:2].copy()
    fail_wts = wts[:2].copy()
    ptr = np.array([0, 1], dtype=np.int64)
    local_sums(theta, feats, wts, fail_feats, fail_wts, ptr)
    a = np.array([1.0, 0.0, 2.0])
    pair_suffix(a, a, ptr)
    risk_ratio_sum(a, a, a, ptr)
    _warmed = True
