"""Finite-difference validation of every analytic gradient in the stack.

The numeric side perturbs one scalar at a time with a central difference
quotient, which is exact enough at double precision (epsilon 1e-5 balances
truncation against roundoff) to resolve relative errors well below the
1e-4 acceptance threshold.
"""

from dataclasses import dataclass

import numpy as np

from . import layers
from .tensor import as_tensor

DEFAULT_EPSILON = 1e-5
DEFAULT_TOLERANCE = 1e-4
# Denominator floor so near-zero gradients do not blow the ratio up.
REL_FLOOR = 1e-8


class NonFiniteLossError(RuntimeError):
    """Loss became NaN/Inf while probing a parameter."""


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def central_difference(loss_fn, params, epsilon=DEFAULT_EPSILON):
    """Per-scalar (f(p+eps) - f(p-eps)) / 2 eps, all other scalars fixed."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    theta = as_tensor(params).copy()
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        saved = flat[idx]
        flat[idx] = saved + epsilon
        plus = loss_fn(theta)
        flat[idx] = saved - epsilon
        minus = loss_fn(theta)
        flat[idx] = saved
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NonFiniteLossError(
                f"non-finite loss while perturbing parameter scalar #{idx}"
            )
        gflat[idx] = (plus - minus) / (2.0 * epsilon)
    return grad


@dataclass
class GradEntry:
    name: str
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradReport:
    """Comparison of analytic vs numeric gradients for one layer."""

    layer: str
    tolerance: float
    entries: list

    @property
    def max_rel_error(self):
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def worst(self):
        return max(self.entries, key=lambda e: e.rel_error, default=None)

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance


def _scalar_names(pname, shape):
    if shape == ():
        return [pname]
    return [f"{pname}[{','.join(map(str, idx))}]" for idx in np.ndindex(shape)]


def check_layer(layer, x, tolerance=DEFAULT_TOLERANCE, epsilon=DEFAULT_EPSILON, seed=0):
    """Compare a layer's analytic parameter gradients against central
    differences of a fixed random linear readout of its output.

    Covers every trainable scalar; a parameterless layer yields an empty
    (passing) report.
    """
    x = as_tensor(x)
    rng = np.random.default_rng(seed)
    probe_out = layer.forward(x, train=False)
    proj = rng.standard_normal(probe_out.shape)

    def loss():
        return float((proj * layer.forward(x, train=False)).sum())

    layer.zero_grads()
    layer.forward(x, train=True)
    layer.backward(proj.copy())

    entries = []
    for p in layer.params():
        if p.grad.shape != p.value.shape:
            raise ValueError(
                f"gradient shape {p.grad.shape} does not match parameter "
                f"{p.name} shape {p.value.shape}"
            )
        analytic = p.grad.copy()

        def loss_at(theta, _p=p):
            saved = _p.value.copy()
            _p.value[...] = theta
            try:
                return loss()
            finally:
                _p.value[...] = saved

        numeric = central_difference(loss_at, p.value, epsilon)
        names = _scalar_names(p.name, p.value.shape)
        for name, a, n in zip(names, analytic.reshape(-1), numeric.reshape(-1)):
            entries.append(GradEntry(name, float(a), float(n), relative_error(a, n)))
    return GradReport(layer=type(layer).__name__, tolerance=tolerance, entries=entries)


class XentProbe(layers.Layer):
    """Adapter that exposes the softmax cross-entropy head to check_layer:
    the logits themselves are the trainable parameter, the forward output
    is the scalar loss."""

    def __init__(self, n_classes, label, rng=None):
        rng = rng or np.random.default_rng(0)
        self.label = int(label)
        self.logits = layers.Param("logits", rng.standard_normal(n_classes))
        self._cache = None

    def params(self):
        return [self.logits]

    def forward(self, x, train=False):
        loss, grad = layers.xent_loss(self.logits.value, self.label)
        if train:
            self._cache = grad
        return np.array([loss])

    def backward(self, dy):
        grad = self._take_cache()
        self.logits.grad += dy[0] * grad
        return np.zeros(0)


def _maxpool_input(rng, length=8, channels=3, pool=2):
    # Resample until every pooling window has a unique argmax: ties make the
    # pooled output non-differentiable at that point.
    while True:
        x = rng.standard_normal((2, length, channels))
        windows = x[:, :(length // pool) * pool, :].reshape(2, -1, pool, channels)
        top = np.sort(windows, axis=2)
        if (top[:, :, -1, :] - top[:, :, -2, :] > 1e-3).all():
            return x


def _dense_case(rng):
    return layers.Dense(4, 3, activation="relu", rng=rng), rng.standard_normal((3, 4))


def _conv_case(rng):
    return layers.Conv1d(2, 3, 4, activation="relu", rng=rng), rng.standard_normal((2, 9, 2))


def _maxpool_case(rng):
    return layers.MaxPool1d(2), _maxpool_input(rng)


def _lstm_case(rng):
    return layers.Lstm(2, 3, rng=rng), rng.standard_normal((2, 4, 2))


def _lstm_sigmoid_case(rng):
    return layers.Lstm(2, 3, candidate_activation="sigmoid", rng=rng), rng.standard_normal((2, 4, 2))


def _peephole_case(rng):
    layer = layers.Lstm(2, 3, variant="peephole", rng=rng)
    # Nonzero peepholes so their gradients are exercised, not just defined.
    for p in layer.params():
        if p.name.startswith("p_"):
            p.value[...] = rng.uniform(-0.5, 0.5, size=p.value.shape)
    return layer, rng.standard_normal((2, 4, 2))


def _blstm_case(rng):
    return layers.BiLstm(2, 5, rng=rng), rng.standard_normal((2, 4, 2))


def _xent_case(rng):
    return XentProbe(3, label=1, rng=rng), np.zeros(0)


LAYER_CASES = {
    "dense": _dense_case,
    "conv1d": _conv_case,
    "maxpool": _maxpool_case,
    "lstm": _lstm_case,
    "lstm-sigmoid-candidate": _lstm_sigmoid_case,
    "lstm-peephole": _peephole_case,
    "blstm": _blstm_case,
    "softmax-xent": _xent_case,
}


def run_suite(names="all", seeds=10, tolerance=DEFAULT_TOLERANCE, corrupt=None):
    """Check each named layer over `seeds` random draws.

    Returns a list of (layer-name, seed, GradReport).  `corrupt` names a
    layer whose first analytic gradient gets deliberately damaged -- a hook
    proving the checker actually catches wrong gradients.
    """
    if names == "all":
        selected = list(LAYER_CASES)
    else:
        selected = [names] if isinstance(names, str) else list(names)
        for n in selected:
            if n not in LAYER_CASES:
                raise KeyError(f"unknown layer {n!r}; choose from {sorted(LAYER_CASES)}")
    results = []
    for name in selected:
        factory = LAYER_CASES[name]
        for seed in range(seeds):
            rng = np.random.default_rng(1000 + seed)
            layer, x = factory(rng)
            report = check_layer(layer, x, tolerance=tolerance, seed=seed)
            if corrupt == name and report.entries:
                bad = report.entries[0]
                damaged = bad.analytic + 1.0
                report.entries[0] = GradEntry(
                    bad.name, damaged, bad.numeric, relative_error(damaged, bad.numeric)
                )
            results.append((name, seed, report))
    return results
