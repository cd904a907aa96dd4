"""Mini-batch training with validation-based checkpointing, evaluation by
mismatch rate, and the multi-run comparative experiment.

One iteration is one mini-batch gradient update.  Every validation_period
iterations the validation classification error is measured and the weights
are snapshotted whenever it improves; training returns the best snapshot.
Recurrent models get their gradients clipped by global norm to keep long
unrolls from exploding.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fileio import atomic_write_text
from .layers import xent_loss_batch
from .models import build_model

RECURRENT_KINDS = ("lstm-f", "lstm-p", "blstm")

# Best errors reported for these families on the original gear recordings
# (proprietary sensor data, so not reproducible from this repository's
# synthetic streams); carried along as context next to experiment output.
REFERENCE_RESULTS = (
    ("lstm-f", "lstm-f-u50", 0.016),
    ("cnn", "cnn-c1-f20", 0.024),
    ("blstm", "blstm-u25", 0.14),
)
REFERENCE_NOTE = ("reported on the original proprietary recordings; "
                  "context only, not reproducible from synthetic data")


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration, learning_rate):
        super().__init__(
            f"non-finite training loss at iteration {iteration} "
            f"(learning rate {learning_rate}); lower the learning rate"
        )
        self.iteration = iteration
        self.learning_rate = learning_rate


@dataclass
class TrainConfig:
    max_iterations: int = 3000
    batch_size: int = 100
    runs: int = 5
    optimizer: str = "adam"  # sgd | momentum | adam
    learning_rate: float = 1e-3
    validation_period: int = 10
    seed: int = 0
    clip_norm: float = 5.0  # global-norm clip, recurrent models only

    def validate(self):
        if self.max_iterations < 1 or self.batch_size < 1 or self.runs < 1:
            raise ValueError("max_iterations, batch_size and runs must be positive")
        if self.validation_period < 1:
            raise ValueError("validation_period must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        return self


@dataclass
class TrainHistory:
    """Loss curve plus the validation checkpoint trail of one training run."""

    losses: list = field(default_factory=list)            # per iteration
    checkpoints: list = field(default_factory=list)       # (iteration, val error)
    best_iteration: int = 0
    best_val_error: float = math.inf
    final_val_error: float = math.nan


class Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params):
        for p in params:
            p.value -= self.lr * p.grad


class Momentum:
    def __init__(self, lr, mu=0.9):
        self.lr = lr
        self.mu = mu
        self.v = None

    def step(self, params):
        if self.v is None:
            self.v = [np.zeros_like(p.value) for p in params]
        for p, v in zip(params, self.v):
            v *= self.mu
            v += p.grad
            p.value -= self.lr * v


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params):
        if self.m is None:
            self.m = [np.zeros_like(p.value) for p in params]
            self.v = [np.zeros_like(p.value) for p in params]
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            p.value -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def make_optimizer(name, lr):
    return {"sgd": Sgd, "momentum": Momentum, "adam": Adam}[name](lr)


def clip_global_norm(params, max_norm):
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad *= scale


def _stack(windows):
    x = np.stack([w.samples for w in windows])
    y = np.array([w.label for w in windows], dtype=np.int64)
    return x, y


def _error_on_arrays(model, x, y, chunk=512):
    wrong = 0
    for lo in range(0, x.shape[0], chunk):
        preds = model.predict_batch(x[lo:lo + chunk])
        wrong += int((preds != y[lo:lo + chunk]).sum())
    return wrong / x.shape[0]


def evaluate(model, windows):
    """Classification error: mismatched windows over total windows."""
    if not windows:
        raise ValueError("cannot evaluate on an empty window list")
    x, y = _stack(windows)
    return _error_on_arrays(model, x, y)


class _BatchCycler:
    """Cycles through seeded shuffles of the training indices."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next_batch(self):
        idx = np.empty(self.batch_size, dtype=np.int64)
        filled = 0
        while filled < self.batch_size:
            take = min(self.batch_size - filled, self.n - self.pos)
            idx[filled:filled + take] = self.order[self.pos:self.pos + take]
            filled += take
            self.pos += take
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
        return idx


def train(model, ds, cfg):
    """Train on ds.train, checkpoint on ds.validation, return the model
    rewound to its best checkpoint together with the run history."""
    cfg.validate()
    if not (ds.train and ds.validation and ds.test):
        raise ValueError("dataset has an empty partition")
    if cfg.batch_size > len(ds.train):
        raise ValueError(f"batch_size {cfg.batch_size} exceeds training set size {len(ds.train)}")
    x_train, y_train = _stack(ds.train)
    x_val, y_val = _stack(ds.validation)
    params = model.params()
    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    cycler = _BatchCycler(len(ds.train), cfg.batch_size, np.random.default_rng(cfg.seed))
    clip = model.config.kind in RECURRENT_KINDS
    history = TrainHistory()
    best_snapshot = None
    for iteration in range(1, cfg.max_iterations + 1):
        idx = cycler.next_batch()
        logits = model.forward(x_train[idx], train=True)
        loss, dlogits = xent_loss_batch(logits, y_train[idx])
        if not math.isfinite(loss):
            raise TrainingDiverged(iteration, cfg.learning_rate)
        model.zero_grads()
        model.backward(dlogits)
        if clip and cfg.clip_norm:
            clip_global_norm(params, cfg.clip_norm)
        optimizer.step(params)
        history.losses.append(loss)
        if iteration % cfg.validation_period == 0:
            val_error = _error_on_arrays(model, x_val, y_val)
            history.checkpoints.append((iteration, val_error))
            if val_error < history.best_val_error:
                history.best_val_error = val_error
                history.best_iteration = iteration
                best_snapshot = [p.value.copy() for p in params]
    history.final_val_error = _error_on_arrays(model, x_val, y_val)
    if best_snapshot is not None:
        for p, saved in zip(params, best_snapshot):
            p.value[...] = saved
    else:
        # No checkpoint was ever due (max_iterations < validation_period).
        history.best_val_error = history.final_val_error
        history.best_iteration = cfg.max_iterations
    return model, history


@dataclass
class CellResult:
    """Outcome of one (config, run) training cell.  final_val_error is the
    validation error of the last-iteration weights (before rewinding to the
    best checkpoint); it stays out of the report CSV."""

    family: str
    config_id: str
    run: int
    seed: int
    test_error: float
    best_val_error: float
    best_iteration: int
    final_val_error: float = math.nan
    failure: str | None = None


@dataclass
class ExperimentReport:
    configs: list
    runs: int
    rows: list

    def mean_error(self, config_id):
        errors = [r.test_error for r in self.rows if r.config_id == config_id]
        return float(np.mean(errors)) if errors else math.nan

    def family_best(self):
        """Per family, the best (lowest) mean test error over its configs."""
        best = {}
        for c in self.configs:
            mean = self.mean_error(c.config_id)
            if c.family not in best or mean < best[c.family]:
                best[c.family] = mean
        return best

    def family_ranking(self):
        best = self.family_best()
        return sorted(best, key=lambda fam: (best[fam], fam))

    def failures(self):
        return [(r.config_id, r.run, r.failure) for r in self.rows if r.failure]


def _train_cell(config, run, ds, cfg):
    seed = cfg.seed + run
    try:
        model = build_model(config, seed=seed)
        trained, history = train(model, ds, replace(cfg, seed=seed))
        test_error = evaluate(trained, ds.test)
        return CellResult(config.family, config.config_id, run, seed, test_error,
                          history.best_val_error, history.best_iteration,
                          final_val_error=history.final_val_error)
    except TrainingDiverged as exc:
        return CellResult(config.family, config.config_id, run, seed,
                          math.nan, math.nan, -1, failure=str(exc))


_worker_state = {}


def _worker_init(ds, cfg):
    _worker_state["ds"] = ds
    _worker_state["cfg"] = cfg


def _worker_run(task):
    config, run = task
    return _train_cell(config, run, _worker_state["ds"], _worker_state["cfg"])


def run_experiment(grid, ds, cfg, jobs=1, progress=None):
    """Run every (config, run) cell of the grid; seeds are seed + run index,
    so cells are independent and may execute in parallel without changing
    any result.  A diverging cell is recorded and does not abort the rest."""
    if not grid:
        raise ValueError("experiment grid is empty")
    cfg.validate()
    tasks = [(config, run) for config in grid for run in range(cfg.runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init,
                                 initargs=(ds, cfg)) as pool:
            rows = list(pool.map(_worker_run, tasks))
    else:
        rows = []
        for task in tasks:
            rows.append(_train_cell(task[0], task[1], ds, cfg))
            if progress:
                progress(rows[-1])
    return ExperimentReport(configs=list(grid), runs=cfg.runs, rows=rows)


def report_to_csv(report):
    lines = ["family,config_id,run,seed,test_error,best_val_error,best_iteration"]
    for r in report.rows:
        lines.append(f"{r.family},{r.config_id},{r.run},{r.seed},"
                     f"{r.test_error!r},{r.best_val_error!r},{r.best_iteration}")
    return "\n".join(lines) + "\n"


def write_report_csv(report, path):
    atomic_write_text(path, report_to_csv(report))


def _plot_series(report):
    """(filename, parameter name, [(value, mean error)]) per plotted series:
    one series per LSTM family, one per CNN depth, one per MLP depth."""
    series = []
    fams = {c.family for c in report.configs}
    for fam in ("lstm-f", "lstm-p", "blstm"):
        if fam in fams:
            pts = [(c.lstm_units, report.mean_error(c.config_id))
                   for c in report.configs if c.family == fam]
            series.append((f"plot_{fam}.csv", "lstm_units", sorted(pts)))
    if "cnn" in fams:
        for depth in sorted({c.conv_layers for c in report.configs if c.family == "cnn"}):
            pts = [(c.filters, report.mean_error(c.config_id))
                   for c in report.configs if c.family == "cnn" and c.conv_layers == depth]
            series.append((f"plot_cnn_conv{depth}.csv", "filters", sorted(pts)))
    if "mlp" in fams:
        for depth in sorted({c.full_layers for c in report.configs if c.family == "mlp"}):
            pts = [(c.hidden_neurons, report.mean_error(c.config_id))
                   for c in report.configs if c.family == "mlp" and c.full_layers == depth]
            series.append((f"plot_mlp_depth{depth}.csv", "hidden_neurons", sorted(pts)))
    return series


def write_plot_csvs(report, outdir):
    """Per-family plot-data files: swept parameter value vs mean test error."""
    paths = []
    for filename, param, pts in _plot_series(report):
        lines = [f"{param},mean_test_error"]
        lines.extend(f"{value},{mean!r}" for value, mean in pts)
        path = os.path.join(outdir, filename)
        atomic_write_text(path, "\n".join(lines) + "\n")
        paths.append(path)
    return paths


def write_reference_csv(outdir):
    lines = ["family,config_id,reference_test_error,note"]
    for family, config_id, err in REFERENCE_RESULTS:
        lines.append(f"{family},{config_id},{err!r},{REFERENCE_NOTE}")
    path = os.path.join(outdir, "reference.csv")
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path
