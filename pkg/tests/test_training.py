import math
from dataclasses import replace

import numpy as np
import pytest

from skigears.data import Window, WindowedDataset
from skigears.models import build_model, lstm_config, mlp_config
from skigears.training import (
    Adam,
    CellResult,
    ExperimentReport,
    Momentum,
    Sgd,
    TrainConfig,
    TrainingDiverged,
    _train_cell,
    clip_global_norm,
    evaluate,
    report_to_csv,
    run_experiment,
    train,
    write_plot_csvs,
    write_report_csv,
)

FAST = TrainConfig(max_iterations=30, batch_size=32, validation_period=10, seed=0)


def snapshot(model):
    return [p.value.copy() for p in model.params()]


def params_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


class TestTrain:
    def test_zero_learning_rate_leaves_weights_alone(self, small_ds):
        model = build_model(mlp_config(1, 30), seed=4)
        before = snapshot(model)
        model, _ = train(model, small_ds, replace(FAST, learning_rate=0.0))
        assert params_equal(before, snapshot(model))

    def test_returned_model_is_best_checkpoint(self, small_ds):
        model = build_model(mlp_config(1, 30), seed=1)
        model, hist = train(model, small_ds, replace(FAST, max_iterations=60))
        assert hist.best_val_error == min(err for _, err in hist.checkpoints)
        returned_err = evaluate(model, small_ds.validation)
        assert returned_err == hist.best_val_error
        assert hist.best_val_error <= hist.final_val_error

    def test_loss_decreases_on_single_batch_toy_problem(self):
        # one mini-batch (batch == train size), cleanly separable labels
        rng = np.random.default_rng(0)
        windows = []
        for i in range(32):
            label = i % 2
            base = np.full((50, 3), 2.0 if label else -2.0)
            windows.append(Window(base + rng.normal(0, 0.1, (50, 3)), label, i * 50))
        ds = WindowedDataset(train=windows, validation=windows[:8], test=windows[:8])
        model = build_model(mlp_config(1, 30), seed=0)
        cfg = TrainConfig(max_iterations=200, batch_size=32, validation_period=50, seed=0)
        model, hist = train(model, ds, cfg)
        first10 = hist.losses[:10]
        assert all(a > b for a, b in zip(first10, first10[1:]))

    def test_deterministic_history(self, small_ds):
        runs = []
        for _ in range(2):
            model = build_model(lstm_config("lstm-f", 25), seed=2)
            _, hist = train(model, small_ds, replace(FAST, max_iterations=12))
            runs.append(hist)
        assert runs[0].losses == runs[1].losses
        assert runs[0].checkpoints == runs[1].checkpoints

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_iteration_and_lr(self, small_ds):
        model = build_model(mlp_config(1, 30), seed=0)
        cfg = replace(FAST, optimizer="sgd", learning_rate=1e200, max_iterations=20)
        with pytest.raises(TrainingDiverged, match="learning rate"):
            train(model, small_ds, cfg)

    def test_batch_size_cannot_exceed_train_set(self, small_ds):
        model = build_model(mlp_config(1, 30), seed=0)
        with pytest.raises(ValueError, match="batch_size"):
            train(model, small_ds, replace(FAST, batch_size=10 ** 6))

    def test_no_checkpoint_due_falls_back_to_final(self, small_ds):
        model = build_model(mlp_config(1, 30), seed=0)
        model, hist = train(model, small_ds, replace(FAST, max_iterations=5))
        assert hist.checkpoints == []
        assert hist.best_val_error == hist.final_val_error

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(max_iterations=0).validate()
        with pytest.raises(ValueError):
            TrainConfig(optimizer="lbfgs").validate()


class TestOptimizers:
    def _quadratic_descent(self, opt_cls, **kw):
        from skigears.layers import Param
        p = Param("w", np.array([5.0, -3.0]))
        opt = opt_cls(0.1, **kw)
        for _ in range(200):
            p.grad[...] = 2.0 * p.value  # d/dw of w^2
            opt.step([p])
        return np.abs(p.value).max()

    def test_all_optimizers_minimise_quadratic(self):
        assert self._quadratic_descent(Sgd) < 1e-6
        assert self._quadratic_descent(Momentum) < 1e-3  # oscillates, converges slower
        assert self._quadratic_descent(Adam) < 1e-2

    def test_clip_global_norm(self):
        from skigears.layers import Param
        a = Param("a", np.zeros(2))
        b = Param("b", np.zeros(1))
        a.grad[...] = [3.0, 0.0]
        b.grad[...] = [4.0]
        clip_global_norm([a, b], 5.0)  # norm exactly 5: untouched
        assert np.array_equal(a.grad, [3.0, 0.0])
        a.grad[...] = [30.0, 0.0]
        b.grad[...] = [40.0]
        clip_global_norm([a, b], 5.0)
        norm = math.sqrt(float((a.grad ** 2).sum() + (b.grad ** 2).sum()))
        assert abs(norm - 5.0) < 1e-12


class ConstantModel:
    """Predicts a fixed class; enough for evaluate()."""

    def __init__(self, cls):
        self.cls = cls

    def predict_batch(self, x):
        return np.full(x.shape[0], self.cls, dtype=np.int64)


def make_windows(labels):
    return [Window(np.zeros((50, 3)), lab, i * 25) for i, lab in enumerate(labels)]


class TestEvaluate:
    def test_all_correct(self):
        windows = make_windows([0] * 10)
        assert evaluate(ConstantModel(0), windows) == 0.0

    def test_two_of_hundred(self):
        windows = make_windows([0] * 98 + [1] * 2)
        assert evaluate(ConstantModel(0), windows) == 0.02

    def test_constant_predictor_on_balanced_set(self):
        windows = make_windows([0, 1] * 50)
        assert evaluate(ConstantModel(0), windows) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            evaluate(ConstantModel(0), [])

    def test_size_weighted_union(self, rng):
        s1 = make_windows(rng.integers(0, 2, size=37).tolist())
        s2 = make_windows(rng.integers(0, 2, size=13).tolist())
        model = ConstantModel(1)
        union = evaluate(model, s1 + s2)
        weighted = (37 * evaluate(model, s1) + 13 * evaluate(model, s2)) / 50
        assert abs(union - weighted) < 1e-12

    def test_random_model_near_half_on_balanced_set(self, small_ds):
        # untrained model with random head behaves like a coin on balanced data
        model = build_model(mlp_config(1, 30), seed=9)
        balanced = [w for w in small_ds.train if w.label == 0][:80]
        balanced += [w for w in small_ds.train if w.label == 1][:80]
        err = evaluate(model, balanced)
        sigma = 0.5 / math.sqrt(len(balanced))
        assert abs(err - 0.5) <= 3 * sigma + 0.05


class TestExperiment:
    def test_mean_arithmetic(self):
        rows = [CellResult("mlp", "mlp-d1-h30", i, i, e, 0.0, 1)
                for i, e in enumerate([0.01, 0.02, 0.02, 0.01, 0.04])]
        report = ExperimentReport(configs=[mlp_config(1, 30)], runs=5, rows=rows)
        assert abs(report.mean_error("mlp-d1-h30") - 0.02) < 1e-15

    def test_single_config_grid(self, small_ds):
        cfg = replace(FAST, runs=3, max_iterations=4, validation_period=2)
        report = run_experiment([mlp_config(1, 30)], small_ds, cfg)
        assert len(report.rows) == 3
        assert [r.run for r in report.rows] == [0, 1, 2]
        assert [r.seed for r in report.rows] == [0, 1, 2]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_cell_recorded_not_raised(self, small_ds):
        cfg = replace(FAST, optimizer="sgd", learning_rate=1e200, max_iterations=10)
        row = _train_cell(mlp_config(1, 30), 0, small_ds, cfg)
        assert row.failure is not None
        assert math.isnan(row.test_error)

    def test_divergent_cell_does_not_abort_grid(self, small_ds, monkeypatch):
        calls = []
        import skigears.training as tr

        real = tr.train

        def flaky(model, ds, cfg):
            calls.append(cfg.seed)
            if cfg.seed == 1:
                raise TrainingDiverged(3, cfg.learning_rate)
            return real(model, ds, cfg)

        monkeypatch.setattr(tr, "train", flaky)
        cfg = replace(FAST, runs=3, max_iterations=4, validation_period=2)
        report = run_experiment([mlp_config(1, 30)], small_ds, cfg)
        assert len(report.rows) == 3
        assert report.failures() and report.failures()[0][1] == 1
        assert not math.isnan(report.rows[0].test_error)

    def test_report_csv_format(self, tmp_path, small_ds):
        cfg = replace(FAST, runs=2, max_iterations=4, validation_period=2)
        report = run_experiment([mlp_config(1, 30), lstm_config("lstm-f", 25)],
                                small_ds, cfg)
        text = report_to_csv(report)
        lines = text.strip().split("\n")
        assert lines[0] == "family,config_id,run,seed,test_error,best_val_error,best_iteration"
        assert len(lines) == 1 + 4
        path = str(tmp_path / "report.csv")
        write_report_csv(report, path)
        assert open(path).read() == text

    def test_plot_csvs(self, tmp_path, small_ds):
        cfg = replace(FAST, runs=1, max_iterations=4, validation_period=2)
        grid = [mlp_config(1, 30), mlp_config(1, 50), mlp_config(2, 30)]
        report = run_experiment(grid, small_ds, cfg)
        paths = write_plot_csvs(report, str(tmp_path))
        names = sorted(p.split("/")[-1] for p in paths)
        assert names == ["plot_mlp_depth1.csv", "plot_mlp_depth2.csv"]
        lines = open(paths[0]).read().strip().split("\n")
        assert lines[0] == "hidden_neurons,mean_test_error"
        assert len(lines) == 3  # 30 and 50

    def test_family_ranking_orders_by_best_mean(self):
        rows = [
            CellResult("mlp", "mlp-d1-h30", 0, 0, 0.30, 0.0, 1),
            CellResult("lstm-f", "lstm-f-u25", 0, 0, 0.10, 0.0, 1),
        ]
        report = ExperimentReport(
            configs=[mlp_config(1, 30), lstm_config("lstm-f", 25)], runs=1, rows=rows)
        assert report.family_ranking() == ["lstm-f", "mlp"]

    def test_parallel_jobs_match_serial(self, small_ds):
        cfg = replace(FAST, runs=2, max_iterations=4, validation_period=2)
        grid = [mlp_config(1, 30)]
        serial = run_experiment(grid, small_ds, cfg, jobs=1)
        parallel = run_experiment(grid, small_ds, cfg, jobs=2)
        assert report_to_csv(serial) == report_to_csv(parallel)

    def test_empty_grid_rejected(self, small_ds):
        with pytest.raises(ValueError):
            run_experiment([], small_ds, FAST)
