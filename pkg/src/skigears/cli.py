"""Command-line entry point for offline experiments.

Subcommands: synth (generate a labelled dataset), train (fit one model),
experiment (run a grid of configs over multiple seeded runs), gradcheck
(finite-difference audit of the layer gradients), eval (score a saved
model).  Exit codes: 0 success, 1 validation or check failure, 2 usage
error, 3 I/O error.
"""

import argparse
import os
import sys
import time
from dataclasses import replace

from . import data, gradcheck, models, serialize, training
from .fileio import atomic_write_text, sha256_file, write_key_value
from .kernels import active_backend
from .tensor import ShapeError


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _write_manifest(path, command, args, seed, inputs, outputs, started):
    manifest = {"command": command}
    for key in sorted(vars(args)):
        if key == "func":
            continue
        manifest[f"arg_{key}"] = vars(args)[key]
    manifest["seed"] = seed
    for i, p in enumerate(inputs):
        manifest[f"input_{i}"] = p
    for i, p in enumerate(outputs):
        manifest[f"output_{i}"] = p
        manifest[f"sha256_{i}"] = sha256_file(p)
    manifest["backend"] = active_backend()
    manifest["duration_s"] = f"{time.monotonic() - started:.3f}"
    write_key_value(path, manifest)


def _load_windowed(path, seed):
    records = data.load_csv(path)
    windows = data.segment(records)
    ds = data.split(windows, seed=seed)
    return data.normalize(ds)


def cmd_synth(args):
    started = time.monotonic()
    spec = data.SynthSpec(
        cycles_per_gear=args.cycles,
        skiers=args.skiers,
        intensity_range=tuple(args.intensity),
        frequency_range=tuple(args.frequency),
        noise_std=args.noise_std,
    )
    records = data.synth_generate(spec, seed=args.seed)
    data.save_csv(args.out, records)
    n2 = sum(1 for r in records if r.gear == 2)
    n3 = len(records) - n2
    print(f"wrote {len(records)} records to {args.out} "
          f"(gear 2: {n2}, gear 3: {n3}, balance {n2 / len(records):.4f}/{n3 / len(records):.4f})")
    _write_manifest(args.out + ".manifest", "synth", args, args.seed,
                    [], [args.out], started)
    return 0


def _config_from_args(args):
    kind = args.model
    if kind == "cnn":
        return models.cnn_config(args.conv_layers, args.filters,
                                 candidate_activation=args.candidate_activation)
    if kind in ("lstm-f", "lstm-p", "blstm"):
        return models.lstm_config(kind, args.units,
                                  candidate_activation=args.candidate_activation)
    return models.mlp_config(args.full_layers, args.neurons,
                             candidate_activation=args.candidate_activation)


def _train_config(args):
    return training.TrainConfig(
        max_iterations=args.iterations,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        learning_rate=args.lr,
        validation_period=args.validation_period,
        seed=args.seed,
    )


def cmd_train(args):
    started = time.monotonic()
    ds = _load_windowed(args.data, args.seed)
    config = _config_from_args(args)
    config.validate(allow_nonstandard=args.allow_nonstandard)
    model = models.build_model(config, seed=args.seed,
                               allow_nonstandard=args.allow_nonstandard)
    cfg = _train_config(args)
    model, history = training.train(model, ds, cfg)
    model.save(args.out)
    history_path = args.out + ".history.csv"
    lines = ["iteration,train_loss,val_error"]
    for iteration, val_error in history.checkpoints:
        lines.append(f"{iteration},{history.losses[iteration - 1]!r},{val_error!r}")
    atomic_write_text(history_path, "\n".join(lines) + "\n")
    test_error = training.evaluate(model, ds.test)
    print(f"{config.config_id}: best validation error {history.best_val_error!r} "
          f"at iteration {history.best_iteration}; test error {test_error!r}")
    print(f"model written to {args.out}, history to {history_path}")
    _write_manifest(args.out + ".manifest", "train", args, args.seed,
                    [args.data], [args.out, history_path], started)
    return 0


def cmd_experiment(args):
    started = time.monotonic()
    os.makedirs(args.out, exist_ok=True)
    ds = _load_windowed(args.data, args.seed)
    grid = models.enumerate_grid()
    if args.grid != "full":
        grid = [c for c in grid if c.family == args.grid]
        if not grid:
            raise models.ConfigError(f"no grid configs in family {args.grid!r}")
    cfg = replace(_train_config(args), runs=args.runs)

    def progress(row):
        status = row.failure or f"test error {row.test_error!r}"
        print(f"  {row.config_id} run {row.run}: {status}")

    report = training.run_experiment(grid, ds, cfg, jobs=args.jobs,
                                     progress=progress if args.verbose else None)
    report_path = os.path.join(args.out, "report.csv")
    training.write_report_csv(report, report_path)
    plot_paths = training.write_plot_csvs(report, args.out)
    reference_path = training.write_reference_csv(args.out)
    best = report.family_best()
    print(f"{len(report.rows)} rows written to {report_path}")
    for fam in report.family_ranking():
        print(f"  {fam}: best mean test error {best[fam]!r}")
    for config_id, run, message in report.failures():
        print(f"  FAILED {config_id} run {run}: {message}")
    _write_manifest(os.path.join(args.out, "manifest.txt"), "experiment", args,
                    args.seed, [args.data],
                    [report_path, *plot_paths, reference_path], started)
    return 0


def cmd_gradcheck(args):
    names = "all" if args.layer == "all" else args.layer
    results = gradcheck.run_suite(names=names, seeds=args.seeds,
                                  tolerance=args.tolerance, corrupt=args.corrupt)
    print(f"{'layer':<26} {'seed':>4} {'params':>7} {'max rel err':>12}  status")
    failed = False
    for name, seed, report in results:
        status = "pass" if report.passed else "FAIL"
        print(f"{name:<26} {seed:>4} {len(report.entries):>7} "
              f"{report.max_rel_error:>12.3e}  {status}")
        if not report.passed:
            failed = True
            worst = report.worst
            print(f"    worst parameter: {worst.name} "
                  f"(analytic {worst.analytic!r}, numeric {worst.numeric!r})")
    return 1 if failed else 0


def cmd_eval(args):
    ds = _load_windowed(args.data, args.seed)
    model = models.load_model(args.model)
    part = {"train": ds.train, "validation": ds.validation, "test": ds.test,
            "all": ds.train + ds.validation + ds.test}[args.partition]
    error = training.evaluate(model, part)
    print(f"classification error on {args.partition}: {error!r}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="skigears",
        description="Train and compare gear classifiers on windowed accelerometer data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled dataset CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--cycles", type=_positive_int, default=data.SynthSpec.cycles_per_gear,
                   help="movement cycles per gear per skier")
    p.add_argument("--skiers", type=_positive_int, default=data.SynthSpec.skiers)
    p.add_argument("--noise-std", type=_nonneg_float, default=data.SynthSpec.noise_std)
    p.add_argument("--intensity", type=_positive_float, nargs=2, metavar=("LO", "HI"),
                   default=list(data.SynthSpec.intensity_range))
    p.add_argument("--frequency", type=_positive_float, nargs=2, metavar=("LO", "HI"),
                   default=list(data.SynthSpec.frequency_range))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    def add_train_flags(p):
        p.add_argument("--iterations", type=_positive_int, default=3000)
        p.add_argument("--batch-size", type=_positive_int, default=100)
        p.add_argument("--lr", type=_nonneg_float, default=1e-3)
        p.add_argument("--optimizer", choices=("sgd", "momentum", "adam"), default="adam")
        p.add_argument("--validation-period", type=_positive_int, default=10)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a single model on a dataset CSV")
    p.add_argument("--data", required=True, help="input CSV (t,ax,ay,az,gear)")
    p.add_argument("--model", required=True, choices=models.KINDS)
    p.add_argument("--units", type=_positive_int, default=50, help="LSTM units")
    p.add_argument("--filters", type=_positive_int, default=20, help="CNN filters")
    p.add_argument("--conv-layers", type=_positive_int, default=1)
    p.add_argument("--neurons", type=_positive_int, default=30, help="MLP hidden neurons")
    p.add_argument("--full-layers", type=_positive_int, default=1, help="MLP hidden layers")
    p.add_argument("--candidate-activation", choices=("tanh", "sigmoid"), default="tanh")
    p.add_argument("--allow-nonstandard", action="store_true",
                   help="accept hyperparameters outside the standard grid")
    p.add_argument("--out", required=True, help="output model file (GSTK1)")
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="run the comparative grid experiment")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", default="full", choices=("full",) + models.KINDS)
    p.add_argument("--runs", type=_positive_int, default=5)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--verbose", action="store_true")
    add_train_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("gradcheck", help="finite-difference audit of layer gradients")
    p.add_argument("--layer", default="all",
                   choices=("all",) + tuple(sorted(gradcheck.LAYER_CASES)))
    p.add_argument("--seeds", type=_positive_int, default=10)
    p.add_argument("--tolerance", type=_positive_float, default=gradcheck.DEFAULT_TOLERANCE)
    p.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval", help="score a saved model on a dataset CSV")
    p.add_argument("--model", required=True, help="GSTK1 model file")
    p.add_argument("--data", required=True)
    p.add_argument("--partition", default="test",
                   choices=("train", "validation", "test", "all"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (ShapeError, models.ConfigError, data.DataFormatError,
            serialize.ContainerError, training.TrainingDiverged, ValueError,
            KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
