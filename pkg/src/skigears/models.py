"""Model zoo: the seven classifier families over 50x3 windows.

Families and their swept settings:

    cnn     1 or 2 convolution layers, 20/40/50 filters of width 10, one
            hidden dense layer of 1000 relu units
    lstm-f  standard forward LSTM, 25/35/50 units
    lstm-p  LSTM with diagonal peepholes, 25/35/50 units
    blstm   bidirectional LSTM, 25/35/50 total units (half per direction)
    mlp     1 or 2 hidden relu layers of 30/50/100 neurons on the flattened
            window

Every model ends in a 2-way linear head; predictions are the argmax with
ties resolved toward the lower class index.
"""

from dataclasses import dataclass

import numpy as np

from . import serialize
from .data import N_CHANNELS, WINDOW_SIZE
from .layers import BiLstm, Conv1d, Dense, Flatten, Lstm, MaxPool1d, Param, split_units
from .tensor import ShapeError, as_tensor

N_CLASSES = 2  # gears 2 and 3; kept as a constant so more gears stay possible

KINDS = ("cnn", "lstm-f", "lstm-p", "blstm", "mlp")
GRID_CONV_LAYERS = (1, 2)
GRID_FILTERS = (20, 40, 50)
GRID_FILTER_SIZE = 10
GRID_LSTM_UNITS = (25, 35, 50)
GRID_MLP_LAYERS = (1, 2)
GRID_MLP_NEURONS = (30, 50, 100)
CNN_HIDDEN = 1000
GRID_BATCH = 100
POOL = 2


class ConfigError(ValueError):
    """Model configuration outside the supported grid or inconsistent."""


@dataclass
class ModelConfig:
    """One cell of the experiment grid.  Fields irrelevant to `kind` stay None."""

    kind: str
    conv_layers: int | None = None
    filters: int | None = None
    filter_size: int | None = None
    full_layers: int | None = None
    lstm_units: int | None = None
    hidden_neurons: int | None = None
    batch_size: int = GRID_BATCH
    candidate_activation: str = "tanh"

    def __post_init__(self):
        self.kind = self.kind.lower()

    def validate(self, allow_nonstandard=False):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; choose from {KINDS}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.candidate_activation not in ("tanh", "sigmoid"):
            raise ConfigError(f"unknown candidate activation {self.candidate_activation!r}")
        def want(name, grid):
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"{self.kind} config needs {name}")
            if value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
            if not allow_nonstandard and value not in grid:
                raise ConfigError(
                    f"{name}={value} is outside the standard grid {grid}; "
                    "pass allow_nonstandard to override"
                )
        if self.kind == "cnn":
            want("conv_layers", GRID_CONV_LAYERS)
            want("filters", GRID_FILTERS)
            want("filter_size", (GRID_FILTER_SIZE,))
            want("hidden_neurons", (CNN_HIDDEN,))
            want("full_layers", (1,))
        elif self.kind in ("lstm-f", "lstm-p", "blstm"):
            want("lstm_units", GRID_LSTM_UNITS)
            if self.kind == "blstm" and self.lstm_units < 2:
                raise ConfigError("blstm needs at least 2 total units")
        else:  # mlp
            want("full_layers", GRID_MLP_LAYERS)
            want("hidden_neurons", GRID_MLP_NEURONS)
        return self

    @property
    def family(self):
        return self.kind

    @property
    def config_id(self):
        if self.kind == "cnn":
            return f"cnn-c{self.conv_layers}-f{self.filters}"
        if self.kind == "mlp":
            return f"mlp-d{self.full_layers}-h{self.hidden_neurons}"
        return f"{self.kind}-u{self.lstm_units}"

    _META_FIELDS = ("kind", "conv_layers", "filters", "filter_size", "full_layers",
                    "lstm_units", "hidden_neurons", "batch_size", "candidate_activation")

    def to_meta(self):
        out = {}
        for name in self._META_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out[name] = str(value)
        return out

    @classmethod
    def from_meta(cls, meta):
        kwargs = {}
        for name in cls._META_FIELDS:
            if name in meta:
                raw = meta[name]
                if name in ("kind", "candidate_activation"):
                    kwargs[name] = raw
                else:
                    kwargs[name] = int(raw)
        return cls(**kwargs)


def cnn_config(conv_layers=1, filters=20, **kw):
    return ModelConfig(kind="cnn", conv_layers=conv_layers, filters=filters,
                       filter_size=GRID_FILTER_SIZE, full_layers=1,
                       hidden_neurons=CNN_HIDDEN, **kw)


def lstm_config(kind="lstm-f", units=50, **kw):
    return ModelConfig(kind=kind, lstm_units=units, **kw)


def mlp_config(full_layers=1, hidden_neurons=30, **kw):
    return ModelConfig(kind="mlp", full_layers=full_layers,
                       hidden_neurons=hidden_neurons, **kw)


def enumerate_grid():
    """All 21 standard configurations, family by family."""
    grid = []
    for conv in GRID_CONV_LAYERS:
        for f in GRID_FILTERS:
            grid.append(cnn_config(conv, f))
    for kind in ("lstm-f", "lstm-p", "blstm"):
        for units in GRID_LSTM_UNITS:
            grid.append(lstm_config(kind, units))
    for depth in GRID_MLP_LAYERS:
        for h in GRID_MLP_NEURONS:
            grid.append(mlp_config(depth, h))
    return grid


class GearClassifier:
    """A layer stack mapping one (50, 3) window to 2 class logits."""

    def __init__(self, config, stack):
        self.config = config
        self.layers = stack

    def params(self):
        return [
            Param.alias(f"layer{idx}.{p.name}", p.value, p.grad)
            for idx, layer in enumerate(self.layers)
            for p in layer.params()
        ]

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def n_params(self):
        return sum(p.value.size for p in self.params())

    def forward(self, x, train=False):
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1:] != (WINDOW_SIZE, N_CHANNELS):
            raise ShapeError(
                f"expected a (batch, {WINDOW_SIZE}, {N_CHANNELS}) stack of windows, got {x.shape}"
            )
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dlogits):
        dx = dlogits
        for layer in reversed(self.layers):
            dx = layer.backward(dx)
        return dx

    def predict_batch(self, x):
        logits = self.forward(x, train=False)
        return np.argmax(logits, axis=1)  # ties resolve to the lower index

    def predict(self, window):
        window = as_tensor(window)
        if window.shape != (WINDOW_SIZE, N_CHANNELS):
            raise ShapeError(f"expected a ({WINDOW_SIZE}, {N_CHANNELS}) window, got {window.shape}")
        return int(self.predict_batch(window[None])[0])

    def save(self, path):
        serialize.write_container(path, [(p.name, p.value) for p in self.params()],
                                  meta=self.config.to_meta())


def build_model(config, seed=0, allow_nonstandard=False):
    """Assemble the classifier a config describes; seeded weight init."""
    config.validate(allow_nonstandard=allow_nonstandard)
    rng = np.random.default_rng(seed)
    stack = []
    if config.kind == "cnn":
        length = WINDOW_SIZE
        channels = N_CHANNELS
        for _ in range(config.conv_layers):
            if length < config.filter_size:
                raise ConfigError(
                    f"window too short for stacked convolutions: length {length} "
                    f"< filter size {config.filter_size}"
                )
            stack.append(Conv1d(channels, config.filters, config.filter_size,
                                activation="relu", rng=rng))
            length = length - config.filter_size + 1
            stack.append(MaxPool1d(POOL))
            length //= POOL
            channels = config.filters
        stack.append(Flatten())
        stack.append(Dense(length * channels, CNN_HIDDEN, activation="relu", rng=rng))
        stack.append(Dense(CNN_HIDDEN, N_CLASSES, rng=rng))
    elif config.kind in ("lstm-f", "lstm-p"):
        variant = "standard" if config.kind == "lstm-f" else "peephole"
        stack.append(Lstm(N_CHANNELS, config.lstm_units, variant=variant,
                          candidate_activation=config.candidate_activation, rng=rng))
        stack.append(Dense(config.lstm_units, N_CLASSES, rng=rng))
    elif config.kind == "blstm":
        stack.append(BiLstm(N_CHANNELS, config.lstm_units,
                            candidate_activation=config.candidate_activation, rng=rng))
        stack.append(Dense(config.lstm_units, N_CLASSES, rng=rng))
    else:  # mlp
        stack.append(Flatten())
        n_in = WINDOW_SIZE * N_CHANNELS
        for _ in range(config.full_layers):
            stack.append(Dense(n_in, config.hidden_neurons, activation="relu", rng=rng))
            n_in = config.hidden_neurons
        stack.append(Dense(n_in, N_CLASSES, rng=rng))
    return GearClassifier(config, stack)


def load_model(path):
    """Rebuild a classifier from a GSTK1 file; bit-identical parameters."""
    meta, arrays = serialize.read_container(path)
    if meta is None:
        raise serialize.ContainerError(f"{path} has no model configuration record")
    config = ModelConfig.from_meta(meta)
    model = build_model(config, seed=0, allow_nonstandard=True)
    for p in model.params():
        if p.name not in arrays:
            raise serialize.ContainerError(f"{path} is missing parameter {p.name}")
        stored = arrays[p.name]
        if stored.shape != p.value.shape:
            raise serialize.ContainerError(
                f"{path}: parameter {p.name} has shape {stored.shape}, expected {p.value.shape}"
            )
        p.value[...] = stored
    return model


def blstm_unit_split(total):
    """Forward/backward unit allocation used by the bidirectional family."""
    return split_units(total)
