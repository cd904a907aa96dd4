#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the raw kernels at training-relevant shapes, then one full training
iteration (forward + backward + update) per model family under each
backend.

Run:  python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from skigears import data, kernels, models, training
from skigears.layers import xent_loss_batch


def timeit(fn, repeat):
    fn()  # warm-up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    cases = {
        "matmul 100x200 @ 200x50": (
            lambda a=rng.standard_normal((100, 200)), b=rng.standard_normal((200, 50)):
            kernels.matmul(a, b)),
        "matmul 100x400 @ 400x1000": (
            lambda a=rng.standard_normal((100, 400)), b=rng.standard_normal((400, 1000)):
            kernels.matmul(a, b)),
        "conv1d fwd B100 T50 C3 F20 K10": (
            lambda x=rng.standard_normal((100, 50, 3)), f=rng.standard_normal((20, 10, 3)),
            b=rng.standard_normal(20): kernels.conv1d_forward(x, f, b)),
        "maxpool fwd B100 L41 F20": (
            lambda y=rng.standard_normal((100, 41, 20)): kernels.maxpool_forward(y, 2)),
    }
    rows = []
    for name, fn in cases.items():
        row = {"case": name}
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            row[backend] = timeit(fn, repeat)
        rows.append(row)
    return rows


def one_iteration(model, x, y):
    logits = model.forward(x, train=True)
    _, dlogits = xent_loss_batch(logits, y)
    model.zero_grads()
    model.backward(dlogits)
    opt = training.make_optimizer("adam", 1e-3)
    opt.step(model.params())


def bench_training(repeat):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((100, data.WINDOW_SIZE, data.N_CHANNELS))
    y = rng.integers(0, 2, size=100)
    configs = [
        models.lstm_config("lstm-f", 50),
        models.cnn_config(1, 20),
        models.mlp_config(1, 30),
    ]
    rows = []
    for config in configs:
        row = {"case": f"train iter {config.config_id} (batch 100)"}
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            model = models.build_model(config, seed=0)
            row[backend] = timeit(lambda: one_iteration(model, x, y), repeat)
        rows.append(row)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (default {kernels.active_backend()})\n")
    header = f"{'case':<38}" + "".join(f"{b + ' (ms)':>14}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for row in bench_kernels(args.repeat) + bench_training(max(3, args.repeat // 4)):
        line = f"{row['case']:<38}"
        for b in backends:
            line += f"{row[b] * 1e3:>14.3f}"
        if len(backends) > 1:
            line += f"{row['numpy'] / row['numba']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
