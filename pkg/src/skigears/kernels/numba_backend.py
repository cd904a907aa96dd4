"""Numba-compiled kernels, the default backend.

The jitted loops accumulate in ascending index order (no fastmath), so every
output scalar is a left-to-right sum: runs are bit-reproducible and the
matmul contract (left-to-right over the inner dimension) is literal here.
Compiled objects are cached on disk, so only the first call after an
install pays the JIT cost.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def matmul(a, b):
    m, kk = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for k in range(kk):
            aik = a[i, k]
            for j in range(n):
                out[i, j] += aik * b[k, j]
    return out


@njit(cache=True)
def _conv1d_forward(x, wt, biases):
    # wt is filters transposed to (K, C, F) so the inner loop is unit-stride
    nb, t, nc = x.shape
    k, _, f = wt.shape
    length = t - k + 1
    out = np.empty((nb, length, f))
    for b in range(nb):
        for l in range(length):
            for j in range(f):
                out[b, l, j] = biases[j]
            for kk in range(k):
                for c in range(nc):
                    xv = x[b, l + kk, c]
                    for j in range(f):
                        out[b, l, j] += xv * wt[kk, c, j]
    return out


@njit(cache=True)
def _conv1d_backward(x, wt, dy):
    nb, t, nc = x.shape
    k, _, f = wt.shape
    length = dy.shape[1]
    dx = np.zeros((nb, t, nc))
    dwt = np.zeros((k, nc, f))
    db = np.zeros(f)
    for b in range(nb):
        for l in range(length):
            for j in range(f):
                db[j] += dy[b, l, j]
            for kk in range(k):
                for c in range(nc):
                    xv = x[b, l + kk, c]
                    acc = 0.0
                    for j in range(f):
                        d = dy[b, l, j]
                        dwt[kk, c, j] += xv * d
                        acc += d * wt[kk, c, j]
                    dx[b, l + kk, c] += acc
    return dx, dwt, db


def conv1d_forward(x, filters, biases):
    wt = np.ascontiguousarray(filters.transpose(1, 2, 0))
    return _conv1d_forward(x, wt, biases)


def conv1d_backward(x, filters, dy):
    wt = np.ascontiguousarray(filters.transpose(1, 2, 0))
    dx, dwt, db = _conv1d_backward(x, wt, dy)
    return dx, np.ascontiguousarray(dwt.transpose(2, 0, 1)), db


@njit(cache=True)
def maxpool_forward(y, pool):
    nb, length, f = y.shape
    p = length // pool
    out = np.empty((nb, p, f))
    arg = np.empty((nb, p, f), np.int64)
    for b in range(nb):
        for pp in range(p):
            base = pp * pool
            for j in range(f):
                best = y[b, base, j]
                bi = base
                for k in range(1, pool):
                    v = y[b, base + k, j]
                    if v > best:
                        best = v
                        bi = base + k
                out[b, pp, j] = best
                arg[b, pp, j] = bi
    return out, arg


@njit(cache=True)
def maxpool_backward(dout, arg, length):
    nb, p, f = dout.shape
    dx = np.zeros((nb, length, f))
    for b in range(nb):
        for pp in range(p):
            for j in range(f):
                dx[b, arg[b, pp, j], j] += dout[b, pp, j]
    return dx
