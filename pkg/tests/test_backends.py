"""Numba and numpy kernel implementations must agree to tight tolerance."""

import numpy as np
import pytest

from oracles import matmul_oracle
from skigears import kernels
from skigears.kernels import numpy_backend

numba_backend = pytest.importorskip("skigears.kernels.numba_backend")

CASES = [(1, 1, 1), (3, 4, 5), (7, 2, 9), (16, 16, 16)]


@pytest.mark.parametrize("m,k,n", CASES)
def test_matmul_backends_agree(rng, m, k, n):
    a = rng.standard_normal((m, k))
    b = rng.standard_normal((k, n))
    nb = numba_backend.matmul(a, b)
    npy = numpy_backend.matmul(a, b)
    assert np.abs(nb - npy).max() < 1e-12
    ref = np.array(matmul_oracle(a.tolist(), b.tolist()))
    assert np.array_equal(nb, ref), "jitted loop must match the literal sum order"
    assert np.abs(npy - ref).max() < 1e-12


def test_conv_backends_agree(rng):
    for _ in range(5):
        x = rng.standard_normal((3, 14, 2))
        f = rng.standard_normal((4, 5, 2))
        b = rng.standard_normal(4)
        ya = numba_backend.conv1d_forward(x, f, b)
        yb = numpy_backend.conv1d_forward(x, f, b)
        assert np.abs(ya - yb).max() < 1e-12
        dy = rng.standard_normal(ya.shape)
        for ga, gb in zip(numba_backend.conv1d_backward(x, f, dy),
                          numpy_backend.conv1d_backward(x, f, dy)):
            assert np.abs(ga - gb).max() < 1e-12


def test_maxpool_backends_agree(rng):
    y = rng.standard_normal((4, 11, 3))
    oa, ia = numba_backend.maxpool_forward(y, 2)
    ob, ib = numpy_backend.maxpool_forward(y, 2)
    assert np.array_equal(oa, ob)
    assert np.array_equal(ia, ib)
    dout = rng.standard_normal(oa.shape)
    assert np.array_equal(numba_backend.maxpool_backward(dout, ia, 11),
                          numpy_backend.maxpool_backward(dout, ib, 11))


def test_maxpool_tie_breaks_to_first_index():
    y = np.array([[[1.0], [1.0], [0.5], [2.0]]])
    for backend in (numba_backend, numpy_backend):
        _, arg = backend.maxpool_forward(y, 2)
        assert arg[0, 0, 0] == 0
        assert arg[0, 1, 0] == 3


def test_backend_switch_round_trip(rng):
    start = kernels.active_backend()
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    try:
        kernels.set_backend("numpy")
        assert kernels.active_backend() == "numpy"
        y_np = kernels.matmul(a, b)
        kernels.set_backend("numba")
        y_nb = kernels.matmul(a, b)
    finally:
        kernels.set_backend(start)
    assert np.abs(y_np - y_nb).max() < 1e-12


def test_unknown_backend_rejected():
    with pytest.raises(RuntimeError, match="not available"):
        kernels.set_backend("fortran")


def test_training_works_on_numpy_backend(small_ds):
    from dataclasses import replace

    from skigears.models import build_model, lstm_config
    from skigears.training import TrainConfig, train

    start = kernels.active_backend()
    try:
        kernels.set_backend("numpy")
        model = build_model(lstm_config("lstm-f", 25), seed=0)
        cfg = TrainConfig(max_iterations=10, batch_size=32, validation_period=5, seed=0)
        model, hist = train(model, small_ds, cfg)
        assert len(hist.losses) == 10
        assert np.isfinite(hist.losses).all()
    finally:
        kernels.set_backend(start)
