"""Independent reference implementations used to validate the package.

Everything in this module is deliberately written without importing
skigears: plain Python loops over plain Python floats (mpmath where
extended precision is wanted).  Slow on purpose; these are the ground
truth the fast kernels are checked against.
"""

import math

import mpmath


def matmul_oracle(a, b):
    """Triple-loop matrix product of two list-of-lists, left-to-right over k."""
    m, k = len(a), len(a[0])
    k2, n = len(b), len(b[0])
    assert k == k2
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for kk in range(k):
                acc += a[i][kk] * b[kk][j]
            out[i][j] = acc
    return out


def sigmoid_oracle(x, dps=50):
    """Logistic function evaluated at `dps` decimal digits, rounded to float."""
    with mpmath.workdps(dps):
        return float(1 / (1 + mpmath.exp(-mpmath.mpf(x))))


def tanh_oracle(x, dps=50):
    with mpmath.workdps(dps):
        return float(mpmath.tanh(mpmath.mpf(x)))


def softmax_oracle(values, dps=50):
    """Softmax computed at extended precision, rounded to floats at the end."""
    with mpmath.workdps(dps):
        exps = [mpmath.exp(mpmath.mpf(v)) for v in values]
        total = mpmath.fsum(exps)
        return [float(e / total) for e in exps]


def _sig(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def lstm_step_oracle(x, h_prev, c_prev, w, peephole=False, candidate="tanh"):
    """One LSTM step traced unit by unit with scalar arithmetic.

    `x` is a list of C floats, `h_prev`/`c_prev` lists of H floats.  `w` is a
    dict of list-of-lists / lists with keys w_xi, w_xf, w_xo, w_xc (each H x C),
    w_hi, w_hf, w_ho, w_hc (each H x H), b_i, b_f, b_o, b_c (each H) and,
    when peephole is set, p_i, p_f, p_o (each H).  Returns (h, c).
    """
    H = len(h_prev)
    C = len(x)
    cand = math.tanh if candidate == "tanh" else _sig
    h_new = [0.0] * H
    c_new = [0.0] * H
    pre_o = [0.0] * H
    for u in range(H):
        zi = w["b_i"][u]
        zf = w["b_f"][u]
        zo = w["b_o"][u]
        zg = w["b_c"][u]
        for j in range(C):
            zi += w["w_xi"][u][j] * x[j]
            zf += w["w_xf"][u][j] * x[j]
            zo += w["w_xo"][u][j] * x[j]
            zg += w["w_xc"][u][j] * x[j]
        for j in range(H):
            zi += w["w_hi"][u][j] * h_prev[j]
            zf += w["w_hf"][u][j] * h_prev[j]
            zo += w["w_ho"][u][j] * h_prev[j]
            zg += w["w_hc"][u][j] * h_prev[j]
        if peephole:
            zi += w["p_i"][u] * c_prev[u]
            zf += w["p_f"][u] * c_prev[u]
        i = _sig(zi)
        f = _sig(zf)
        g = cand(zg)
        c_new[u] = f * c_prev[u] + i * g
        pre_o[u] = zo
    for u in range(H):
        zo = pre_o[u]
        if peephole:
            zo += w["p_o"][u] * c_new[u]
        o = _sig(zo)
        h_new[u] = o * math.tanh(c_new[u])
    return h_new, c_new


def lstm_sequence_oracle(xs, w, peephole=False, candidate="tanh"):
    """Unrolled sequence of lstm_step_oracle from a zero state; returns final h."""
    H = len(w["b_i"])
    h = [0.0] * H
    c = [0.0] * H
    for x in xs:
        h, c = lstm_step_oracle(x, h, c, w, peephole=peephole, candidate=candidate)
    return h


def conv1d_oracle(x, filters, biases):
    """Valid 1-D convolution, stride 1, by brute-force nested loops.

    x: T x C list-of-lists, filters: F x K x C nested lists, biases: F list.
    Returns (T-K+1) x F list-of-lists.
    """
    T, C = len(x), len(x[0])
    F, K = len(filters), len(filters[0])
    L = T - K + 1
    out = [[0.0] * F for _ in range(L)]
    for t in range(L):
        for f in range(F):
            acc = biases[f]
            for k in range(K):
                for c in range(C):
                    acc += filters[f][k][c] * x[t + k][c]
            out[t][f] = acc
    return out


def maxpool1d_oracle(y, pool):
    """Non-overlapping max pooling over leading axis; trailing remainder dropped."""
    L, F = len(y), len(y[0])
    P = L // pool
    out = [[0.0] * F for _ in range(P)]
    for p in range(P):
        for f in range(F):
            out[p][f] = max(y[p * pool + k][f] for k in range(pool))
    return out


def window_starts_oracle(n, window, step):
    """Enumerate window start offsets one index at a time."""
    starts = []
    s = 0
    while s + window <= n:
        starts.append(s)
        s += step
    return starts


def central_diff_oracle(f, x, eps=1e-5):
    """Two-sided difference quotient of a scalar function of one scalar."""
    return (f(x + eps) - f(x - eps)) / (2.0 * eps)
