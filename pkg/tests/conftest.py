import numpy as np
import pytest

from lepus import expert
from lepus.sim import SimParams
from lepus.track import oval_track


@pytest.fixture(scope="session")
def track():
    return oval_track(lap_length=400.0, half_width=6.0)


@pytest.fixture(scope="session")
def small_dataset(track):
    """Six PID rounds on the small oval, three agents (session-cached)."""
    ds, summary = expert.generate_dataset(
        track, n_agents=3, n_rounds=6, max_steps_keep=360, seed=123,
        params=SimParams(), spacing=20.0, obs_dim=65)
    assert ds.n_rounds >= 4, summary
    return ds


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
