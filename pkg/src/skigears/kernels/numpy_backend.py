"""Pure-numpy reference kernels.

Fallback path used when numba is unavailable or when SKIGEARS_BACKEND=numpy
is set.  Matrix products go through BLAS (np.dot), so the summation order
inside one product is whatever the linked BLAS uses; it is still fully
deterministic for a fixed environment.
"""

import numpy as np

NAME = "numpy"


def matmul(a, b):
    return a @ b


def conv1d_forward(x, filters, biases):
    """Valid stride-1 convolution. x (B,T,C), filters (F,K,C) -> (B,T-K+1,F)."""
    k = filters.shape[1]
    # windows[b, l, c, k] == x[b, l+k, c]
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)
    return np.einsum("blck,fkc->blf", windows, filters) + biases


def conv1d_backward(x, filters, dy):
    """Gradients of conv1d_forward: returns (dx, dfilters, dbiases)."""
    f, k, c = filters.shape
    length = dy.shape[1]
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)
    dfilters = np.einsum("blf,blck->fkc", dy, windows)
    dbiases = dy.sum(axis=(0, 1))
    dx = np.zeros_like(x)
    for kk in range(k):
        dx[:, kk:kk + length, :] += dy @ filters[:, kk, :]
    return dx, dfilters, dbiases


def maxpool_forward(y, pool):
    """Non-overlapping max pool over axis 1; returns (pooled, flat argmax)."""
    b, length, f = y.shape
    p = length // pool
    trimmed = y[:, :p * pool, :].reshape(b, p, pool, f)
    pooled = trimmed.max(axis=2)
    arg = trimmed.argmax(axis=2) + (np.arange(p) * pool)[None, :, None]
    return pooled, arg


def maxpool_backward(dout, arg, length):
    b, p, f = dout.shape
    dx = np.zeros((b, length, f))
    bb = np.arange(b)[:, None, None]
    ff = np.arange(f)[None, None, :]
    dx[bb, arg, ff] = dout  # pool windows are disjoint, indices unique
    return dx
