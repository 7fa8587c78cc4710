"""Hot-loop kernels with a numba backend and a pure-numpy fallback.

Backend choice is read once at import from ``DEHAZEKIT_NUMBA``: set it to
``0`` to force numpy. Without the variable, numba is used when importable.
``get_backend(name)`` returns either module for side-by-side comparison.
"""
import os

from . import _numpy

ENV_FLAG = "DEHAZEKIT_NUMBA"

try:
    from . import _numba
except ImportError:  # numba missing or broken
    _numba = None


def get_backend(name: str):
    if name == "numpy":
        return _numpy
    if name == "numba":
        if _numba is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _numba
    raise ValueError(f"unknown backend {name!r}")


def _select():
    flag = os.environ.get(ENV_FLAG, "").strip().lower()
    if flag in ("0", "false", "no", "off") or _numba is None:
        return "numpy"
    return "numba"


BACKEND = _select()
_impl = get_backend(BACKEND)

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
min_filter = _impl.min_filter
kmeans1d = _impl.kmeans1d
