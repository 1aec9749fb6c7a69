"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the pure-Python
fallback is loaded. Setting ``AIID_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("AIID_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    return _impl.jacobi_eigh(A, tol, max_sweeps)


def ml_decode_batch(books, ys, logw):
    return _impl.ml_decode_batch(books, ys, logw)


def binary_count_dp(p_one):
    return _impl.binary_count_dp(p_one)


def transport_simplex(supply, demand, cost, max_iter=1000000):
    return _impl.transport_simplex(supply, demand, cost, max_iter)


def backends():
    """Both implementations keyed by name, for tests and benchmarks."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
