"""Accelerometer stream ingestion, windowing, splitting and synthesis.

A stream is a list of Records on a uniform 50 Hz index grid, each carrying
the tri-axial acceleration (x horizontal, y up, z forward) and the gear
label 2 or 3.  Classification happens on 1-second windows (50 samples)
cut with 50% overlap (hop 25).
"""

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .fileio import atomic_write_text, write_key_value

SAMPLE_RATE = 50
WINDOW_SIZE = 50
WINDOW_STEP = 25
N_CHANNELS = 3
GEARS = (2, 3)
GEAR_TO_LABEL = {2: 0, 3: 1}
LABEL_TO_GEAR = {0: 2, 1: 3}
CSV_HEADER = "t,ax,ay,az,gear"
DEFAULT_SPLIT = (0.70, 0.15, 0.15)
STD_FLOOR = 1e-8


class DataFormatError(ValueError):
    """Malformed input stream (bad CSV row, bad label, bad ordering)."""


class Record(NamedTuple):
    t: int
    ax: float
    ay: float
    az: float
    gear: int


@dataclass
class Window:
    """One fixed-length labelled segment; label 0 is gear 2, label 1 gear 3.
    `start` is the offset of the first sample in the source stream."""

    samples: np.ndarray  # (WINDOW_SIZE, N_CHANNELS)
    label: int
    start: int


@dataclass
class ChannelStats:
    mean: np.ndarray  # (N_CHANNELS,)
    std: np.ndarray   # (N_CHANNELS,)


@dataclass
class WindowedDataset:
    """Disjoint train/validation/test windows; normalization stats, when
    present, were computed on the train partition only."""

    train: list
    validation: list
    test: list
    stats: ChannelStats | None = None

    def counts(self):
        return len(self.train), len(self.validation), len(self.test)


def load_csv(path):
    """Read a `t,ax,ay,az,gear` stream; errors name the offending line."""
    records = []
    prev_t = None
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").rstrip("\r")
        if header != CSV_HEADER:
            raise DataFormatError(f"{path}:1: expected header {CSV_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise DataFormatError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                t = int(parts[0])
                ax, ay, az = float(parts[1]), float(parts[2]), float(parts[3])
                gear = int(parts[4])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if gear not in GEARS:
                raise DataFormatError(f"{path}:{lineno}: unknown gear value {gear}")
            if prev_t is not None and t <= prev_t:
                raise DataFormatError(f"{path}:{lineno}: non-monotone sample index {t} after {prev_t}")
            prev_t = t
            records.append(Record(t, ax, ay, az, gear))
    if not records:
        raise DataFormatError(f"{path}: no records")
    return records


def save_csv(path, records):
    """Write records with full round-trip float precision, LF endings."""
    lines = [CSV_HEADER]
    lines.extend(f"{r.t},{r.ax!r},{r.ay!r},{r.az!r},{r.gear}" for r in records)
    atomic_write_text(path, "\n".join(lines) + "\n")


def segment(records, window=WINDOW_SIZE, step=WINDOW_STEP):
    """Cut a stream into overlapping windows starting at 0, step, 2*step...

    The window label is the majority gear among its samples; exact ties are
    discarded.  A stream shorter than one window yields no windows.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if not 1 <= step <= window:
        raise ValueError("step must satisfy 1 <= step <= window")
    n = len(records)
    if n < window:
        return []
    data = np.array([(r.ax, r.ay, r.az) for r in records], dtype=np.float64)
    is_gear2 = np.fromiter((r.gear == 2 for r in records), count=n, dtype=np.int64)
    cum2 = np.concatenate([[0], np.cumsum(is_gear2)])
    windows = []
    for start in range(0, n - window + 1, step):
        n2 = int(cum2[start + window] - cum2[start])
        n3 = window - n2
        if n2 == n3:
            continue  # exact tie: no crisp majority
        label = 0 if n2 > n3 else 1
        windows.append(Window(samples=data[start:start + window].copy(),
                              label=label, start=start))
    return windows


def split(windows, ratios=DEFAULT_SPLIT, seed=None):
    """Contiguous block split in source order.

    Shuffling would leak half-overlapping windows across partitions, so the
    stream order is kept and any window sharing samples with the previous
    partition is dropped.  `seed` is accepted for interface stability; the
    block split is deterministic and does not consume it.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    total = len(windows)
    n_train = int(math.floor(ratios[0] * total))
    n_val = int(math.floor(ratios[1] * total))
    parts = [list(windows[:n_train]),
             list(windows[n_train:n_train + n_val]),
             list(windows[n_train + n_val:])]
    for k in (1, 2):
        if not parts[k - 1]:
            break
        prev_last = parts[k - 1][-1]
        span = prev_last.samples.shape[0]
        while parts[k] and parts[k][0].start < prev_last.start + span:
            parts[k].pop(0)
    if not all(parts):
        raise ValueError(
            f"split produced an empty partition (sizes {[len(p) for p in parts]}); "
            "need more windows or different ratios"
        )
    return WindowedDataset(train=parts[0], validation=parts[1], test=parts[2])


def normalize(ds):
    """Z-score every channel using train-only statistics (std floored at
    1e-8 so constant channels map to zero)."""
    if not ds.train:
        raise ValueError("cannot normalize a dataset with an empty train partition")
    stacked = np.concatenate([w.samples for w in ds.train], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)

    def transform(part):
        return [replace(w, samples=(w.samples - mean) / std) for w in part]

    return WindowedDataset(train=transform(ds.train),
                           validation=transform(ds.validation),
                           test=transform(ds.test),
                           stats=ChannelStats(mean=mean, std=std))


@dataclass
class SynthSpec:
    """Knobs for the synthetic two-gear generator."""

    cycles_per_gear: int = 60
    skiers: int = 8
    intensity_range: tuple = (1.0, 3.0)
    frequency_range: tuple = (1.2, 2.0)
    noise_std: float = 0.5

    def validate(self):
        if self.cycles_per_gear < 1:
            raise ValueError("cycles_per_gear must be >= 1")
        if self.skiers < 1:
            raise ValueError("skiers must be >= 1")
        for name in ("intensity_range", "frequency_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    def as_meta(self):
        return {
            "cycles_per_gear": self.cycles_per_gear,
            "skiers": self.skiers,
            "intensity_lo": repr(float(self.intensity_range[0])),
            "intensity_hi": repr(float(self.intensity_range[1])),
            "frequency_lo": repr(float(self.frequency_range[0])),
            "frequency_hi": repr(float(self.frequency_range[1])),
            "noise_std": repr(float(self.noise_std)),
        }


# The two gears share per-skier intensity and base frequency, per-channel
# energy (unit-norm harmonic profiles) and every cross-channel covariance
# (channel phase offsets are common to both gears and all harmonics, so the
# covariance collapses to cos of the offset difference for both).  The class
# signal lives in waveform shape: moderately different harmonic weights --
# small enough that the per-skier intensity spread makes any single band
# magnitude ambiguous -- and strongly different inter-harmonic phases.
def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.sqrt((v * v).sum())


GEAR_HARMONICS = {
    2: _unit([0.70, 0.52, 0.48]),
    3: _unit([0.58, 0.62, 0.53]),
}
GEAR_BASE_PHASES = {  # per harmonic, radians
    2: np.array([0.00, 0.40, 1.00]),
    3: np.array([0.00, 2.60, 4.60]),
}
CHANNEL_PHASE = np.array([0.00, 2.10, 4.20])  # shared by both gears
CHANNEL_GAIN = np.array([1.00, 0.72, 0.88])
N_HARMONICS = 3


def _gear_phase(gear, harmonic, channel):
    return GEAR_BASE_PHASES[gear][harmonic] + CHANNEL_PHASE[channel]


def synth_generate(spec=None, seed=0):
    """Deterministic synthetic stream: per skier, one contiguous segment of
    each gear at a personal amplitude and base frequency drawn from the
    configured ranges.  Equal cycles_per_gear gives an exactly balanced
    record histogram."""
    spec = spec if spec is not None else SynthSpec()
    spec.validate()
    rng = np.random.default_rng(seed)
    records = []
    t = 0
    for _ in range(spec.skiers):
        amp = rng.uniform(*spec.intensity_range)
        freq = rng.uniform(*spec.frequency_range)
        n = max(1, round(spec.cycles_per_gear * SAMPLE_RATE / freq))
        tau = np.arange(n) / SAMPLE_RATE
        for gear in GEARS:
            prof = GEAR_HARMONICS[gear]
            sig = np.zeros((n, N_CHANNELS))
            for k in range(N_HARMONICS):
                arg = 2.0 * np.pi * (k + 1) * freq * tau
                for ch in range(N_CHANNELS):
                    sig[:, ch] += amp * prof[k] * np.sin(arg + _gear_phase(gear, k, ch))
            sig *= CHANNEL_GAIN
            sig += rng.normal(0.0, spec.noise_std, size=(n, N_CHANNELS))
            for m in range(n):
                records.append(Record(t, float(sig[m, 0]), float(sig[m, 1]),
                                      float(sig[m, 2]), gear))
                t += 1
    return records


def write_dataset_manifest(path, seed, spec, ratios, ds):
    """key=value manifest recording how a windowed dataset was produced."""
    meta = {"seed": seed}
    meta.update(spec.as_meta())
    meta.update({
        "ratio_train": repr(float(ratios[0])),
        "ratio_validation": repr(float(ratios[1])),
        "ratio_test": repr(float(ratios[2])),
        "windows_train": len(ds.train),
        "windows_validation": len(ds.validation),
        "windows_test": len(ds.test),
    })
    write_key_value(path, meta)
