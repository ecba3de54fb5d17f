import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsefield.errors import DimensionError, LayoutError, NumericalError
from sparsefield.field import (Grid2D, SensorLayout, SnapshotMatrix, build_mapping_matrix,
                               flatten_sbf, reshape_sbf_column, sample_sensors)


def grid(n1=4, n2=4):
    return Grid2D.uniform(n1, n2, 0.15, 0.2)


def test_mapping_matrix_example():
    m = build_mapping_matrix(SensorLayout(grid(), [2, 8, 11, 13]))
    assert m.shape == (4, 16)
    ones = {tuple(ix) for ix in np.argwhere(m == 1)}
    assert ones == {(0, 1), (1, 7), (2, 10), (3, 12)}
    assert m.sum() == 4


def test_full_layout_is_identity():
    g = grid()
    np.testing.assert_array_equal(build_mapping_matrix(SensorLayout.full(g)), np.eye(16))


def test_row_selection_oracle():
    g = Grid2D([0, 1, 2, 3], [0, 1, 2, 3])
    # only 4 sensors would violate the grid rule, so embed T_f in a 16-sensor grid
    tf = np.zeros(16)
    tf[:4] = [10, 20, 30, 40]
    ts = build_mapping_matrix(SensorLayout(g, [3, 1])) @ tf
    np.testing.assert_array_equal(ts, [30, 10])


@pytest.mark.parametrize("tags", [[1, 1], [0], [17], []])
def test_invalid_layouts(tags):
    with pytest.raises(LayoutError):
        SensorLayout(grid(), tags)


def test_grid_invariants():
    with pytest.raises(LayoutError):
        Grid2D([0, 1, 2], [0, 1, 2, 3])
    with pytest.raises(LayoutError):
        Grid2D([0, 1, 1, 2], [0, 1, 2, 3])
    with pytest.raises(LayoutError):
        Grid2D([0, 1, 2, np.nan], [0, 1, 2, 3])
    g = grid(4, 5)
    assert (g.n1, g.n2, g.size) == (4, 5, 20)
    assert Grid2D.from_dict(g.to_dict()) == g
    assert g != grid(4, 6)
    assert hash(Grid2D.from_dict(g.to_dict())) == hash(g)


def test_sensor_positions_are_row_major():
    g = grid()
    pos = g.sensor_positions()
    # tag 2 sits at (x_1, y_2), tag 5 at (x_2, y_1)
    np.testing.assert_array_equal(pos[1], [g.x_coords[0], g.y_coords[1]])
    np.testing.assert_array_equal(pos[4], [g.x_coords[1], g.y_coords[0]])


def test_sample_sensors_examples(rng):
    g = grid()
    full = SnapshotMatrix(rng.normal(size=(16, 50)), dt=2.0, t0=3.0)
    assert np.array_equal(sample_sensors(full, SensorLayout.full(g)).data, full.data)
    sparse = sample_sensors(full, SensorLayout(g, [3, 11]))
    np.testing.assert_array_equal(sparse.data, full.data[[2, 10]])
    assert (sparse.dt, sparse.t0) == (2.0, 3.0)


def test_single_row_selection():
    g = grid()
    data = np.arange(32, dtype=float).reshape(16, 2)
    out = sample_sensors(SnapshotMatrix(data), SensorLayout(g, [2]))
    np.testing.assert_array_equal(out.data, [[2.0, 3.0]])


def test_sample_sensors_row_mismatch():
    with pytest.raises(DimensionError):
        sample_sensors(SnapshotMatrix(np.ones((15, 3))), SensorLayout(grid(), [1]))


def test_reshape_examples(rng):
    with pytest.raises(LayoutError):
        reshape_sbf_column([1, 2, 3, 4], Grid2D([0, 1], [0, 1]))
    m = reshape_sbf_column(np.arange(1, 17), grid())
    np.testing.assert_array_equal(m[0], [1, 2, 3, 4])
    np.testing.assert_array_equal(m[3], [13, 14, 15, 16])
    z = rng.normal(size=20)
    np.testing.assert_array_equal(flatten_sbf(reshape_sbf_column(z, grid(4, 5))), z)
    with pytest.raises(DimensionError):
        reshape_sbf_column(np.ones(15), grid())


def test_snapshot_matrix_checks():
    with pytest.raises(NumericalError):
        SnapshotMatrix([[1.0, np.inf]])
    s = SnapshotMatrix(np.ones(4), dt=0.5, t0=1.0)
    assert s.data.shape == (4, 1)
    assert not s.data.flags.writeable
    t = SnapshotMatrix(np.ones((2, 5)), dt=0.5, t0=1.0).columns(2, 4)
    assert t.n_snapshots == 2 and t.t0 == 2.0


@st.composite
def layouts(draw):
    n1 = draw(st.integers(4, 6))
    n2 = draw(st.integers(4, 6))
    tags = draw(st.lists(st.integers(1, n1 * n2), min_size=1, max_size=n1 * n2, unique=True))
    return SensorLayout(grid(n1, n2), tags)


@given(layouts(), st.integers(0, 2**32 - 1))
def test_mapping_matches_row_selection(layout, seed):
    data = np.random.default_rng(seed).normal(size=(layout.n_full, 7))
    m = build_mapping_matrix(layout)
    np.testing.assert_array_equal(m @ data, sample_sensors(SnapshotMatrix(data), layout).data)
    assert np.all(m.sum(axis=1) == 1)
    assert set(np.unique(m.sum(axis=0))) <= {0.0, 1.0}


@given(st.integers(4, 7), st.integers(4, 7), st.integers(0, 2**32 - 1))
def test_reshape_round_trip(n1, n2, seed):
    z = np.random.default_rng(seed).normal(size=n1 * n2)
    g = grid(n1, n2)
    phi = reshape_sbf_column(z, g)
    assert phi.shape == (n1, n2)
    np.testing.assert_array_equal(flatten_sbf(phi), z)
