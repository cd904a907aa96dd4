"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations exist: a numba-jitted one (default) and
a pure-numpy fallback.  Selection, in order of precedence:

  1. the SKIGEARS_BACKEND environment variable ("numba" or "numpy"),
  2. numba if it imports cleanly,
  3. numpy otherwise.

All dispatch wrappers normalise inputs to C-contiguous float64 so each
jitted kernel compiles exactly once per array rank.
"""

import os

import numpy as np

from . import numpy_backend

_backends = {"numpy": numpy_backend}
try:
    from . import numba_backend
    _backends["numba"] = numba_backend
    _default = "numba"
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    _default = "numpy"

_requested = os.environ.get("SKIGEARS_BACKEND", "").strip().lower()
if _requested and _requested not in _backends:
    raise RuntimeError(
        f"SKIGEARS_BACKEND={_requested!r} is not available; "
        f"choose one of {sorted(_backends)}"
    )
_impl = _backends[_requested or _default]


def active_backend() -> str:
    return _impl.NAME


def available_backends():
    return sorted(_backends)


def set_backend(name: str):
    """Switch kernel implementations at runtime (used by tests and benchmarks)."""
    global _impl
    if name not in _backends:
        raise RuntimeError(f"backend {name!r} not available; have {sorted(_backends)}")
    _impl = _backends[name]


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def matmul(a, b):
    return _impl.matmul(_c(a), _c(b))


def conv1d_forward(x, filters, biases):
    return _impl.conv1d_forward(_c(x), _c(filters), _c(biases))


def conv1d_backward(x, filters, dy):
    return _impl.conv1d_backward(_c(x), _c(filters), _c(dy))


def maxpool_forward(y, pool):
    return _impl.maxpool_forward(_c(y), int(pool))


def maxpool_backward(dout, arg, length):
    return _impl.maxpool_backward(_c(dout), np.ascontiguousarray(arg, dtype=np.int64), int(length))
