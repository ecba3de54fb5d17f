import numpy as np
import pytest
from hypothesis import settings

from sparsefield.experiments import evaluation_context
from sparsefield.field import Grid2D, SnapshotMatrix
from sparsefield.io import Dataset
from sparsefield.simulator import HeatSimConfig, simulate

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sim_result():
    """Default simulator run; shared because it costs a few seconds."""
    return simulate(HeatSimConfig())


@pytest.fixture(scope="session")
def sim_dataset(sim_result):
    return Dataset.from_simulation(sim_result, truth_stride=1)


@pytest.fixture(scope="session")
def sim_context(sim_dataset):
    return evaluation_context(sim_dataset)


def rank2_data(length=300, seed=0):
    """Exact rank-2 field on a 4x4 grid driven by a step input."""
    grid = Grid2D.uniform(4, 4, 0.15, 0.2)
    pos = grid.sensor_positions()
    phi1 = 1.0 + 0.0 * pos[:, 0]
    phi2 = np.cos(np.pi * pos[:, 0] / 0.15) + pos[:, 1] / 0.2
    r = np.random.default_rng(seed)
    u = np.repeat(r.uniform(0, 1, length // 30 + 1), 30)[:length]
    a1, a2 = np.zeros(length), np.zeros(length)
    a1[0] = 25.0
    for t in range(1, length):
        a1[t] = a1[t - 1] + 0.05 * (25.0 + 10 * u[t] - a1[t - 1])
        a2[t] = 0.95 * a2[t - 1] + 0.2 * u[t]
    data = np.outer(phi1, a1) + np.outer(phi2, a2)
    return grid, SnapshotMatrix(data), u[None]
