"""Forward and backward passes for every building block of the classifiers.

Two surfaces live here.  The Layer classes are the batch-first training
path (inputs carry a leading batch axis) with cached activations and exact
analytic gradients.  The module-level functions (lstm_step, lstm_sequence,
bilstm_sequence, conv1d_forward, maxpool1d, dense_forward, xent_loss)
operate on single unbatched sequences/vectors and are the readable
reference surface; both paths share the same kernels.

LSTM cell, gate order [i, f, o, g]:

    i = sigmoid(W_xi x + W_hi h_prev + b_i [+ p_i * c_prev])
    f = sigmoid(W_xf x + W_hf h_prev + b_f [+ p_f * c_prev])
    g = act   (W_xc x + W_hc h_prev + b_c)        act: tanh (default) or sigmoid
    c = f * c_prev + i * g
    o = sigmoid(W_xo x + W_ho h_prev + b_o [+ p_o * c])
    h = o * tanh(c)

The bracketed terms are the diagonal peephole connections: input and forget
gates read the previous cell state, the output gate reads the current one.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import ShapeError, as_tensor, sigmoid, softmax, softmax_rows, tanh_act

VARIANTS = ("standard", "peephole")
CANDIDATE_ACTIVATIONS = ("tanh", "sigmoid")


def glorot_limit(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


def _uniform(rng, fan_in, fan_out, shape):
    r = glorot_limit(fan_in, fan_out)
    return rng.uniform(-r, r, size=shape)


class Param:
    """A named trainable array paired with its accumulated gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name, value):
        self.name = name
        self.value = as_tensor(value)
        self.grad = np.zeros_like(self.value)

    @classmethod
    def alias(cls, name, value, grad):
        """A renamed view onto existing storage (for nested layers)."""
        p = cls.__new__(cls)
        p.name = name
        p.value = value
        p.grad = grad
        return p


class Layer:
    """Base class: forward(x, train) -> y, backward(dy) -> dx.

    backward accumulates parameter gradients in place and needs the cache
    written by the most recent forward(train=True).  One instance must not
    be trained from two threads; forward(train=False) is pure.
    """

    def params(self):
        return []

    def zero_grads(self):
        for p in self.params():
            p.grad[...] = 0.0

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _take_cache(self):
        cache = getattr(self, "_cache", None)
        if cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called without a cached forward pass")
        self._cache = None
        return cache


class Dense(Layer):
    """Fully connected layer y = act(x W + b), weights stored input-major."""

    def __init__(self, n_in, n_out, activation="identity", rng=None):
        if activation not in ("identity", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        self.w = Param("w", _uniform(rng, n_in, n_out, (n_in, n_out)))
        self.b = Param("b", np.zeros(n_out))
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=False):
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"dense expects (batch, {self.n_in}), got {x.shape}")
        z = kernels.matmul(x, self.w.value) + self.b.value
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        if train:
            self._cache = (x, z)
        return y

    def backward(self, dy):
        x, z = self._take_cache()
        dz = dy * (z > 0.0) if self.activation == "relu" else dy
        self.w.grad += kernels.matmul(x.T, dz)
        self.b.grad += dz.sum(axis=0)
        return kernels.matmul(dz, self.w.value.T)


@dataclass
class ConvFilterBank:
    """F local filters of width K over C input channels, plus biases."""

    filters: np.ndarray  # (F, K, C)
    biases: np.ndarray   # (F,)

    def __post_init__(self):
        self.filters = as_tensor(self.filters)
        self.biases = as_tensor(self.biases)
        if self.filters.ndim != 3 or self.biases.shape != (self.filters.shape[0],):
            raise ShapeError(
                f"filter bank wants (F,K,C) filters and (F,) biases, "
                f"got {self.filters.shape} and {self.biases.shape}"
            )


class Conv1d(Layer):
    """Valid stride-1 convolution along time, optional relu."""

    def __init__(self, in_channels, filters, kernel_size, activation="identity", rng=None):
        if activation not in ("identity", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.in_channels = in_channels
        self.n_filters = filters
        self.kernel_size = kernel_size
        self.activation = activation
        fan_in = kernel_size * in_channels
        fan_out = kernel_size * filters
        self.w = Param("filters", _uniform(rng, fan_in, fan_out, (filters, kernel_size, in_channels)))
        self.b = Param("biases", np.zeros(filters))
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=False):
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(f"conv1d expects (batch, T, {self.in_channels}), got {x.shape}")
        if x.shape[1] < self.kernel_size:
            raise ShapeError(f"sequence length {x.shape[1]} shorter than filter width {self.kernel_size}")
        z = kernels.conv1d_forward(x, self.w.value, self.b.value)
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        if train:
            self._cache = (x, z)
        return y

    def backward(self, dy):
        x, z = self._take_cache()
        dz = dy * (z > 0.0) if self.activation == "relu" else dy
        dx, dw, db = kernels.conv1d_backward(x, self.w.value, dz)
        self.w.grad += dw
        self.b.grad += db
        return dx


class MaxPool1d(Layer):
    """Channel-wise max over non-overlapping windows; remainder is dropped."""

    def __init__(self, pool):
        if pool < 1:
            raise ValueError("pool size must be >= 1")
        self.pool = pool
        self._cache = None

    def forward(self, x, train=False):
        x = as_tensor(x)
        if x.ndim != 3:
            raise ShapeError(f"maxpool expects (batch, L, F), got {x.shape}")
        if x.shape[1] < self.pool:
            raise ShapeError(f"length {x.shape[1]} shorter than pool window {self.pool}")
        out, arg = kernels.maxpool_forward(x, self.pool)
        if train:
            self._cache = (arg, x.shape[1])
        return out

    def backward(self, dy):
        arg, length = self._take_cache()
        return kernels.maxpool_backward(dy, arg, length)


class Flatten(Layer):
    def forward(self, x, train=False):
        x = as_tensor(x)
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        shape = self._take_cache()
        return dy.reshape(shape)


@dataclass
class LstmWeights:
    """Gate weight matrices (H x C input-to-gate, H x H hidden-to-gate),
    biases, and the diagonal peephole vectors for that cell variant."""

    w_xi: np.ndarray
    w_xf: np.ndarray
    w_xo: np.ndarray
    w_xc: np.ndarray
    w_hi: np.ndarray
    w_hf: np.ndarray
    w_ho: np.ndarray
    w_hc: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray
    p_i: np.ndarray | None = None
    p_f: np.ndarray | None = None
    p_o: np.ndarray | None = None

    MATRIX_NAMES = ("w_xi", "w_xf", "w_xo", "w_xc", "w_hi", "w_hf", "w_ho", "w_hc")
    BIAS_NAMES = ("b_i", "b_f", "b_o", "b_c")
    PEEPHOLE_NAMES = ("p_i", "p_f", "p_o")

    @property
    def units(self):
        return self.w_xi.shape[0]

    @property
    def in_channels(self):
        return self.w_xi.shape[1]

    @property
    def peephole(self):
        return self.p_i is not None

    @classmethod
    def init(cls, in_channels, units, peephole=False, rng=None):
        """Glorot-uniform matrices, zero biases except the forget bias at 1.0
        (keeps the cell trainable from the start), zero peepholes."""
        rng = rng or np.random.default_rng(0)
        def wx():
            return _uniform(rng, in_channels, units, (units, in_channels))
        def wh():
            return _uniform(rng, units, units, (units, units))
        return cls(
            w_xi=wx(), w_xf=wx(), w_xo=wx(), w_xc=wx(),
            w_hi=wh(), w_hf=wh(), w_ho=wh(), w_hc=wh(),
            b_i=np.zeros(units), b_f=np.ones(units),
            b_o=np.zeros(units), b_c=np.zeros(units),
            p_i=np.zeros(units) if peephole else None,
            p_f=np.zeros(units) if peephole else None,
            p_o=np.zeros(units) if peephole else None,
        )

    @classmethod
    def zeros(cls, in_channels, units, peephole=False):
        w = cls.init(in_channels, units, peephole=peephole)
        for name in (*cls.MATRIX_NAMES, *cls.BIAS_NAMES):
            getattr(w, name)[...] = 0.0
        return w


@dataclass
class LstmState:
    """Hidden unit and memory cell for one step; zeros at sequence start."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, units):
        return cls(h=np.zeros(units), c=np.zeros(units))


def _candidate(name):
    if name not in CANDIDATE_ACTIVATIONS:
        raise ValueError(f"candidate activation must be one of {CANDIDATE_ACTIVATIONS}, got {name!r}")
    return tanh_act if name == "tanh" else sigmoid


def _check_variant(variant, w):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if variant == "peephole" and not w.peephole:
        raise ShapeError("peephole variant requested but weights carry no peephole vectors")


def lstm_step(x_t, state, w, variant="standard", candidate_activation="tanh"):
    """Advance one LSTM step for a single input vector; returns the new state."""
    _check_variant(variant, w)
    act = _candidate(candidate_activation)
    x_t = as_tensor(x_t)
    h, c = as_tensor(state.h), as_tensor(state.c)
    if x_t.shape != (w.in_channels,) or h.shape != (w.units,) or c.shape != (w.units,):
        raise ShapeError(
            f"lstm_step got x {x_t.shape}, h {h.shape}, c {c.shape} "
            f"for weights with C={w.in_channels}, H={w.units}"
        )
    if not (np.isfinite(h).all() and np.isfinite(c).all()):
        raise ValueError("lstm_step called with non-finite state")
    zi = w.w_xi @ x_t + w.w_hi @ h + w.b_i
    zf = w.w_xf @ x_t + w.w_hf @ h + w.b_f
    zo = w.w_xo @ x_t + w.w_ho @ h + w.b_o
    zg = w.w_xc @ x_t + w.w_hc @ h + w.b_c
    if variant == "peephole":
        zi = zi + w.p_i * c
        zf = zf + w.p_f * c
    i = sigmoid(zi)
    f = sigmoid(zf)
    g = act(zg)
    c_new = f * c + i * g
    if variant == "peephole":
        zo = zo + w.p_o * c_new
    o = sigmoid(zo)
    return LstmState(h=o * np.tanh(c_new), c=c_new)


def lstm_sequence(x, w, variant="standard", candidate_activation="tanh",
                  initial=None, return_state=False):
    """Run the cell over a (T, C) sequence from a zero (or given) state.

    Returns the final hidden vector, or the full LstmState when
    return_state is set so a chunked caller can resume where it stopped.
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"lstm_sequence expects a non-empty (T, C) sequence, got {x.shape}")
    state = initial if initial is not None else LstmState.zeros(w.units)
    for t in range(x.shape[0]):
        state = lstm_step(x[t], state, w, variant=variant,
                          candidate_activation=candidate_activation)
    return state if return_state else state.h


def split_units(total):
    """Forward/backward unit counts for a bidirectional cell: floor(U/2)
    forward, the rest backward."""
    if total < 2:
        raise ValueError(f"bidirectional cell needs at least 2 units, got {total}")
    fwd = total // 2
    return fwd, total - fwd


def bilstm_sequence(x, w_fwd, w_bwd, candidate_activation="tanh"):
    """Forward pass over x and over time-reversed x; final hidden states
    concatenated as [h_fwd; h_bwd]."""
    x = as_tensor(x)
    h_f = lstm_sequence(x, w_fwd, candidate_activation=candidate_activation)
    h_b = lstm_sequence(x[::-1], w_bwd, candidate_activation=candidate_activation)
    return np.concatenate([h_f, h_b])


def conv1d_forward(x, bank):
    """Valid stride-1 convolution of a (T, C) sequence with a filter bank."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"conv1d_forward expects (T, C), got {x.shape}")
    k = bank.filters.shape[1]
    if x.shape[0] < k:
        raise ShapeError(f"sequence length {x.shape[0]} shorter than filter width {k}")
    return kernels.conv1d_forward(x[None], bank.filters, bank.biases)[0]


def maxpool1d(y, pool):
    """Per-channel max over non-overlapping windows of a (L, F) map."""
    y = as_tensor(y)
    if y.ndim != 2:
        raise ShapeError(f"maxpool1d expects (L, F), got {y.shape}")
    if pool < 1:
        raise ValueError("pool size must be >= 1")
    if y.shape[0] < pool:
        raise ShapeError(f"length {y.shape[0]} shorter than pool window {pool}")
    out, _ = kernels.maxpool_forward(y[None], pool)
    return out[0]


def dense_forward(x, w, b, activation="identity"):
    """activation(W x + b) for a single input vector, W laid out (out, in)."""
    x = as_tensor(x)
    w = as_tensor(w)
    b = as_tensor(b)
    if w.ndim != 2 or x.shape != (w.shape[1],) or b.shape != (w.shape[0],):
        raise ShapeError(f"dense_forward got x {x.shape}, W {w.shape}, b {b.shape}")
    z = w @ x + b
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "identity":
        return z
    raise ValueError(f"unknown activation {activation!r}")


def xent_loss(logits, label):
    """Cross-entropy -log softmax(logits)[label]; returns (loss, dlogits)."""
    logits = as_tensor(logits)
    p = softmax(logits)
    label = int(label)
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    loss = float(np.log(np.exp(shifted).sum()) - shifted[label])
    grad = p.copy()
    grad[label] -= 1.0
    return loss, grad


def xent_loss_batch(logits, labels):
    """Mean cross-entropy over a batch; returns (loss, dlogits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise ValueError("label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    loss = float((logz - shifted[np.arange(n), labels]).mean())
    grad = softmax_rows(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class Lstm(Layer):
    """Batched LSTM over (batch, T, C) inputs returning the final hidden
    state; gradients are accumulated across all timesteps (shared weights).
    """

    def __init__(self, in_channels, units, variant="standard",
                 candidate_activation="tanh", rng=None):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        self.in_channels = in_channels
        self.units = units
        self.variant = variant
        self.candidate_activation = candidate_activation
        _candidate(candidate_activation)  # validate early
        self.weights = LstmWeights.init(in_channels, units,
                                        peephole=variant == "peephole",
                                        rng=rng or np.random.default_rng(0))
        self._params = [Param(n, getattr(self.weights, n)) for n in self._param_names()]
        # Params alias the LstmWeights arrays so both views stay in sync.
        for p in self._params:
            setattr(self.weights, p.name, p.value)
        self._cache = None

    def _param_names(self):
        names = list(LstmWeights.MATRIX_NAMES) + list(LstmWeights.BIAS_NAMES)
        if self.variant == "peephole":
            names += list(LstmWeights.PEEPHOLE_NAMES)
        return names

    def params(self):
        return self._params

    def _packed(self):
        w = self.weights
        wx = np.concatenate([w.w_xi.T, w.w_xf.T, w.w_xo.T, w.w_xc.T], axis=1)
        wh = np.concatenate([w.w_hi.T, w.w_hf.T, w.w_ho.T, w.w_hc.T], axis=1)
        b = np.concatenate([w.b_i, w.b_f, w.b_o, w.b_c])
        return np.ascontiguousarray(wx), np.ascontiguousarray(wh), b

    def forward(self, x, train=False):
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(f"lstm expects (batch, T, {self.in_channels}), got {x.shape}")
        if x.shape[1] < 1:
            raise ShapeError("empty sequence")
        n, t, _ = x.shape
        u = self.units
        peep = self.variant == "peephole"
        act = _candidate(self.candidate_activation)
        wx, wh, b = self._packed()
        xs = np.ascontiguousarray(x.transpose(1, 0, 2))  # (T, B, C)
        h = np.zeros((n, u))
        c = np.zeros((n, u))
        cache = {
            "i": np.empty((t, n, u)), "f": np.empty((t, n, u)),
            "o": np.empty((t, n, u)), "g": np.empty((t, n, u)),
            "c": np.empty((t, n, u)), "c_prev": np.empty((t, n, u)),
            "h_prev": np.empty((t, n, u)), "tc": np.empty((t, n, u)),
        }
        w = self.weights
        for step in range(t):
            pre = kernels.matmul(xs[step], wx) + kernels.matmul(h, wh) + b
            zi = pre[:, :u]
            zf = pre[:, u:2 * u]
            zo = pre[:, 2 * u:3 * u]
            zg = pre[:, 3 * u:]
            if peep:
                zi = zi + c * w.p_i
                zf = zf + c * w.p_f
            i = sigmoid(zi)
            f = sigmoid(zf)
            g = act(zg)
            c_new = f * c + i * g
            if peep:
                zo = zo + c_new * w.p_o
            o = sigmoid(zo)
            tc = np.tanh(c_new)
            cache["i"][step] = i
            cache["f"][step] = f
            cache["o"][step] = o
            cache["g"][step] = g
            cache["c_prev"][step] = c
            cache["h_prev"][step] = h
            cache["c"][step] = c_new
            cache["tc"][step] = tc
            c = c_new
            h = o * tc
        if train:
            cache["xs"] = xs
            cache["wx"] = wx
            cache["wh"] = wh
            self._cache = cache
        if not np.isfinite(h).all():
            raise FloatingPointError("non-finite hidden state in lstm forward")
        return h

    def backward(self, dh_last):
        cache = self._take_cache()
        xs, wx, wh = cache["xs"], cache["wx"], cache["wh"]
        t, n, _ = xs.shape
        u = self.units
        peep = self.variant == "peephole"
        w = self.weights
        wx_t = np.ascontiguousarray(wx.T)
        wh_t = np.ascontiguousarray(wh.T)
        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros(4 * u)
        dp_i = np.zeros(u)
        dp_f = np.zeros(u)
        dp_o = np.zeros(u)
        dx = np.empty((t, n, self.in_channels))
        dh = as_tensor(dh_last).copy()
        dc = np.zeros((n, u))
        for step in range(t - 1, -1, -1):
            i = cache["i"][step]
            f = cache["f"][step]
            o = cache["o"][step]
            g = cache["g"][step]
            c_prev = cache["c_prev"][step]
            c_cur = cache["c"][step]
            tc = cache["tc"][step]
            do = dh * tc
            dzo = do * o * (1.0 - o)
            dc = dc + dh * o * (1.0 - tc * tc)
            if peep:
                dp_o += (dzo * c_cur).sum(axis=0)
                dc = dc + dzo * w.p_o
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dzi = di * i * (1.0 - i)
            dzf = df * f * (1.0 - f)
            if self.candidate_activation == "tanh":
                dzg = dg * (1.0 - g * g)
            else:
                dzg = dg * g * (1.0 - g)
            dc_prev = dc * f
            if peep:
                dp_i += (dzi * c_prev).sum(axis=0)
                dp_f += (dzf * c_prev).sum(axis=0)
                dc_prev = dc_prev + dzi * w.p_i + dzf * w.p_f
            dpre = np.concatenate([dzi, dzf, dzo, dzg], axis=1)
            dwx += kernels.matmul(xs[step].T, dpre)
            dwh += kernels.matmul(cache["h_prev"][step].T, dpre)
            db += dpre.sum(axis=0)
            dx[step] = kernels.matmul(dpre, wx_t)
            dh = kernels.matmul(dpre, wh_t)
            dc = dc_prev
        for gi, (mat, hid, bias) in enumerate((("w_xi", "w_hi", "b_i"), ("w_xf", "w_hf", "b_f"),
                                               ("w_xo", "w_ho", "b_o"), ("w_xc", "w_hc", "b_c"))):
            cols = slice(gi * u, (gi + 1) * u)
            self._grad(mat)[...] += dwx[:, cols].T
            self._grad(hid)[...] += dwh[:, cols].T
            self._grad(bias)[...] += db[cols]
        if peep:
            self._grad("p_i")[...] += dp_i
            self._grad("p_f")[...] += dp_f
            self._grad("p_o")[...] += dp_o
        return np.ascontiguousarray(dx.transpose(1, 0, 2))

    def _grad(self, name):
        for p in self._params:
            if p.name == name:
                return p.grad
        raise KeyError(name)


class BiLstm(Layer):
    """Two LSTMs, one over the sequence and one over its time reversal;
    their final hidden states are concatenated."""

    def __init__(self, in_channels, total_units, candidate_activation="tanh", rng=None):
        fwd, bwd = split_units(total_units)
        rng = rng or np.random.default_rng(0)
        self.total_units = total_units
        self.fwd = Lstm(in_channels, fwd, candidate_activation=candidate_activation, rng=rng)
        self.bwd = Lstm(in_channels, bwd, candidate_activation=candidate_activation, rng=rng)
        self._params = [
            Param.alias(f"{prefix}.{p.name}", p.value, p.grad)
            for prefix, sub in (("fwd", self.fwd), ("bwd", self.bwd))
            for p in sub.params()
        ]
        self._cache = None

    def params(self):
        return self._params

    def forward(self, x, train=False):
        x = as_tensor(x)
        h_f = self.fwd.forward(x, train=train)
        h_b = self.bwd.forward(np.ascontiguousarray(x[:, ::-1, :]), train=train)
        if train:
            self._cache = True
        return np.concatenate([h_f, h_b], axis=1)

    def backward(self, dy):
        self._take_cache()
        nf = self.fwd.units
        dx = self.fwd.backward(dy[:, :nf])
        dx_rev = self.bwd.backward(dy[:, nf:])
        return dx + dx_rev[:, ::-1, :]
