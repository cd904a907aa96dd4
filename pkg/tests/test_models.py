import numpy as np
import pytest

from skigears.data import N_CHANNELS, WINDOW_SIZE
from skigears.layers import BiLstm, Conv1d, Dense, Lstm, MaxPool1d
from skigears.models import (
    ConfigError,
    ModelConfig,
    blstm_unit_split,
    build_model,
    cnn_config,
    enumerate_grid,
    load_model,
    lstm_config,
    mlp_config,
)
from skigears.tensor import ShapeError


def expected_cnn_dims(conv_layers, filters, k=10, pool=2):
    length, channels = WINDOW_SIZE, N_CHANNELS
    for _ in range(conv_layers):
        length = (length - k + 1) // pool
        channels = filters
    return length * channels


class TestGrid:
    def test_total_is_21(self):
        assert len(enumerate_grid()) == 21

    def test_family_sizes(self):
        fams = {}
        for c in enumerate_grid():
            fams[c.family] = fams.get(c.family, 0) + 1
        assert fams == {"cnn": 6, "lstm-f": 3, "lstm-p": 3, "blstm": 3, "mlp": 6}

    def test_lstm_units_column(self):
        units = [c.lstm_units for c in enumerate_grid() if c.family == "lstm-f"]
        assert units == [25, 35, 50]

    def test_ids_unique(self):
        ids = [c.config_id for c in enumerate_grid()]
        assert len(set(ids)) == 21

    def test_every_grid_config_validates(self):
        for c in enumerate_grid():
            c.validate()


class TestConfig:
    def test_off_grid_rejected_without_override(self):
        with pytest.raises(ConfigError, match="outside the standard grid"):
            lstm_config("lstm-f", 40).validate()

    def test_off_grid_allowed_with_override(self):
        lstm_config("lstm-f", 40).validate(allow_nonstandard=True)
        cnn_config(1, 10).validate(allow_nonstandard=True)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ModelConfig(kind="transformer").validate()

    def test_missing_field(self):
        with pytest.raises(ConfigError, match="needs lstm_units"):
            ModelConfig(kind="lstm-f").validate()

    def test_meta_round_trip(self):
        for c in enumerate_grid():
            again = ModelConfig.from_meta(c.to_meta())
            assert again == c


class TestBuildShapes:
    def test_cnn_single_layer_shapes(self):
        model = build_model(cnn_config(1, 20), seed=0)
        kinds = [type(l).__name__ for l in model.layers]
        assert kinds == ["Conv1d", "MaxPool1d", "Flatten", "Dense", "Dense"]
        dense_hidden = model.layers[3]
        assert (dense_hidden.n_in, dense_hidden.n_out) == (400, 1000)
        assert model.layers[4].n_out == 2
        x = np.zeros((1, WINDOW_SIZE, N_CHANNELS))
        conv_out = model.layers[0].forward(x)
        assert conv_out.shape == (1, 41, 20)
        assert model.layers[1].forward(conv_out).shape == (1, 20, 20)

    def test_cnn_two_layer_shapes(self):
        model = build_model(cnn_config(2, 40), seed=0)
        dense_hidden = [l for l in model.layers if isinstance(l, Dense)][0]
        assert dense_hidden.n_in == 5 * 40  # 50 -> 41 -> 20 -> 11 -> 5

    def test_blstm_even_split(self):
        model = build_model(lstm_config("blstm", 50), seed=0)
        bi = model.layers[0]
        assert isinstance(bi, BiLstm)
        assert (bi.fwd.units, bi.bwd.units) == (25, 25)

    def test_blstm_odd_split(self):
        model = build_model(lstm_config("blstm", 25), seed=0)
        bi = model.layers[0]
        assert (bi.fwd.units, bi.bwd.units) == (12, 13)
        assert blstm_unit_split(25) == (12, 13)

    def test_mlp_parameter_count(self):
        model = build_model(mlp_config(1, 30), seed=0)
        assert model.n_params() == 150 * 30 + 30 + 30 * 2 + 2  # 4592

    def test_peephole_only_in_lstm_p(self):
        f = build_model(lstm_config("lstm-f", 25), seed=0)
        p = build_model(lstm_config("lstm-p", 25), seed=0)
        assert f.layers[0].variant == "standard"
        assert p.layers[0].variant == "peephole"
        assert any(q.name.endswith("p_i") for q in p.params())
        assert not any(q.name.endswith("p_i") for q in f.params())

    def test_all_grid_configs_forward_to_two_logits(self, rng):
        x = rng.standard_normal((2, WINDOW_SIZE, N_CHANNELS))
        for c in enumerate_grid():
            model = build_model(c, seed=0)
            logits = model.forward(x)
            assert logits.shape == (2, 2), c.config_id

    def test_exhaustive_shape_rules(self):
        for c in enumerate_grid():
            model = build_model(c, seed=0)
            if c.family == "cnn":
                dense_hidden = [l for l in model.layers if isinstance(l, Dense)][0]
                assert dense_hidden.n_in == expected_cnn_dims(c.conv_layers, c.filters)
                assert dense_hidden.n_out == 1000
            elif c.family == "mlp":
                denses = [l for l in model.layers if isinstance(l, Dense)]
                assert len(denses) == c.full_layers + 1
                assert denses[0].n_in == 150
                assert all(d.n_out == c.hidden_neurons for d in denses[:-1])
            else:
                head = model.layers[-1]
                assert head.n_in == c.lstm_units
            assert model.layers[-1].n_out == 2

    def test_window_too_short_for_stacked_convs(self):
        cfg = ModelConfig(kind="cnn", conv_layers=3, filters=20, filter_size=10,
                          full_layers=1, hidden_neurons=1000)
        with pytest.raises(ConfigError, match="too short"):
            build_model(cfg, seed=0, allow_nonstandard=True)


class TestPredict:
    def test_argmax_forced(self, small_ds):
        model = build_model(mlp_config(1, 30), seed=0)
        head = model.layers[-1]
        head.w.value[...] = 0.0
        head.b.value[...] = [2.0, -1.0]
        assert model.predict(small_ds.train[0].samples) == 0
        head.b.value[...] = [-1.0, 2.0]
        assert model.predict(small_ds.train[0].samples) == 1

    def test_tie_breaks_low(self, small_ds):
        model = build_model(mlp_config(1, 30), seed=0)
        head = model.layers[-1]
        head.w.value[...] = 0.0
        head.b.value[...] = 0.0
        for w in small_ds.train[:5]:
            assert model.predict(w.samples) == 0

    def test_shift_invariance_of_argmax(self, small_ds, rng):
        model = build_model(mlp_config(1, 30), seed=3)
        head = model.layers[-1]
        before = [model.predict(w.samples) for w in small_ds.test[:10]]
        head.b.value += 7.25  # shift both logits
        after = [model.predict(w.samples) for w in small_ds.test[:10]]
        assert before == after

    def test_wrong_window_shape(self):
        model = build_model(mlp_config(1, 30), seed=0)
        with pytest.raises(ShapeError):
            model.predict(np.zeros((49, 3)))
        with pytest.raises(ShapeError):
            model.forward(np.zeros((2, 50, 4)))


class TestSaveLoad:
    @pytest.mark.parametrize("config", [
        cnn_config(1, 20),
        lstm_config("lstm-f", 25),
        lstm_config("lstm-p", 25),
        lstm_config("blstm", 25),
        mlp_config(2, 50),
    ], ids=lambda c: c.config_id)
    def test_round_trip_bit_identical_predictions(self, config, tmp_path, rng):
        model = build_model(config, seed=5)
        path = str(tmp_path / f"{config.config_id}.gstk")
        model.save(path)
        again = load_model(path)
        assert again.config == model.config
        x = rng.standard_normal((4, WINDOW_SIZE, N_CHANNELS))
        assert np.array_equal(model.forward(x), again.forward(x))
        assert np.array_equal(model.predict_batch(x), again.predict_batch(x))

    def test_missing_parameter_detected(self, tmp_path):
        from skigears.serialize import ContainerError, write_container
        model = build_model(mlp_config(1, 30), seed=0)
        path = str(tmp_path / "partial.gstk")
        params = model.params()[:-1]
        write_container(path, [(p.name, p.value) for p in params],
                        meta=model.config.to_meta())
        with pytest.raises(ContainerError, match="missing parameter"):
            load_model(path)
