import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from skigears import data

settings.register_profile("local", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("local")


@pytest.fixture(scope="session")
def small_ds():
    """A compact synthetic dataset for training-path tests."""
    spec = data.SynthSpec(cycles_per_gear=30, skiers=4)
    records = data.synth_generate(spec, seed=7)
    ds = data.split(data.segment(records))
    return data.normalize(ds)


@pytest.fixture(scope="session")
def big_records():
    """A stream with exactly 416,737 records (the reference corpus size)."""
    spec = data.SynthSpec(cycles_per_gear=700, skiers=10)
    records = data.synth_generate(spec, seed=3)
    assert len(records) >= 416_737, "generator spec too small for the reference count"
    return records[:416_737]


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
