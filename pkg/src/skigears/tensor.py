"""Dense double-precision array operations shared by every layer.

A "tensor" here is simply a C-contiguous float64 ndarray: row-major flat
storage plus a shape, which is all the layers need.  Everything is pure --
inputs are never written to, outputs are freshly allocated -- so any of
these may be called concurrently.
"""

import numpy as np

from . import kernels

Tensor = np.ndarray


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


def as_tensor(data) -> Tensor:
    """Coerce to a C-contiguous float64 array (copying only when needed)."""
    return np.ascontiguousarray(data, dtype=np.float64)


def matmul(a, b) -> Tensor:
    """Matrix product with per-element summation running left to right over
    the inner dimension (on the numba backend; the numpy fallback delegates
    to BLAS, which is deterministic per build but orders sums its own way).
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs two matrices, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return kernels.matmul(a, b)


def sigmoid(x) -> Tensor:
    """Elementwise logistic 1/(1+e^-x), overflow-safe for any finite input."""
    x = as_tensor(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_act(x) -> Tensor:
    """Elementwise hyperbolic tangent."""
    return np.tanh(as_tensor(x))


def hadamard(a, b) -> Tensor:
    """Elementwise product of two identically shaped tensors."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shapes differ: {a.shape} vs {b.shape}")
    return a * b


def softmax(logits) -> Tensor:
    """Probability vector from a logit vector (>=2 classes), computed with
    max-subtraction so large logits cannot overflow."""
    z = as_tensor(logits)
    if z.ndim != 1:
        raise ShapeError(f"softmax expects a vector, got shape {z.shape}")
    if z.shape[0] < 2:
        raise ShapeError("softmax needs at least 2 classes")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(z) -> Tensor:
    """Row-wise softmax of a (batch, classes) matrix."""
    z = as_tensor(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)
