import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsefield.errors import DegenerateDataError, DimensionError, InsufficientDataError
from sparsefield.field import SnapshotMatrix
from sparsefield.separation import (TemporalCoefficients, project_coefficients,
                                    reconstruct, select_order, separate, truncate)


def test_select_order_examples():
    assert select_order([90, 9, 1], 0.99) == 2
    assert select_order([90, 9, 1], 0.90) == 1
    assert select_order([90, 9, 1], 1.0) == 3
    assert select_order([5, 0, 0], 1.0) == 1
    with pytest.raises(DegenerateDataError):
        select_order([0, 0], 0.99)
    with pytest.raises(ValueError):
        select_order([1, 1], 0.0)


def test_rank_one_field():
    phi = np.full(16, 0.25)
    data = np.outer(phi, np.linspace(1, 3, 40))
    basis, coeffs = separate(SnapshotMatrix(data))
    assert basis.order == 1
    np.testing.assert_allclose(basis.phi[:, 0], phi, atol=1e-12)
    np.testing.assert_allclose(reconstruct(basis, coeffs).data, data, atol=1e-12)


def test_sign_convention(rng):
    basis, _ = separate(SnapshotMatrix(rng.normal(size=(16, 30))), order=5)
    for col in basis.phi.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_energy_measures(rng):
    data = rng.normal(size=(16, 30)) + 25.0
    b2, _ = separate(SnapshotMatrix(data), 0.99)
    b1, _ = separate(SnapshotMatrix(data), 0.99, energy_measure="singular")
    s = np.linalg.svd(data, compute_uv=False)
    np.testing.assert_allclose(b2.energies, s ** 2)
    np.testing.assert_allclose(b1.energies, s)
    # singular values are flatter than their squares, so they never retain fewer modes
    assert b1.order >= b2.order
    with pytest.raises(ValueError):
        separate(SnapshotMatrix(data), energy_measure="cubed")


def test_needs_two_snapshots():
    with pytest.raises(InsufficientDataError):
        separate(SnapshotMatrix(np.ones((16, 1))))


def test_zero_data_is_degenerate():
    with pytest.raises(DegenerateDataError):
        separate(SnapshotMatrix(np.zeros((16, 5))))


def test_project_and_truncate(rng):
    data = rng.normal(size=(16, 20))
    basis, coeffs = separate(SnapshotMatrix(data), order=4)
    again = project_coefficients(basis, SnapshotMatrix(data))
    np.testing.assert_allclose(again.a, coeffs.a, atol=1e-12)
    assert truncate(basis, 2).order == 2
    with pytest.raises(ValueError):
        truncate(basis, 5)
    with pytest.raises(DimensionError):
        project_coefficients(basis, SnapshotMatrix(np.ones((15, 2))))
    with pytest.raises(DimensionError):
        reconstruct(basis, TemporalCoefficients(np.ones((3, 2))))


@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(1, 16))
def test_truncation_error_equals_tail_energy(seed, cols, order):
    data = np.random.default_rng(seed).normal(size=(16, cols))
    order = min(order, min(data.shape))
    basis, coeffs = separate(SnapshotMatrix(data), order=order)
    err = np.sum((data - basis.phi @ coeffs.a) ** 2)
    tail = basis.energies[order:].sum()
    assert abs(err - tail) <= 1e-8 * max(1.0, basis.energies.sum())
    np.testing.assert_allclose(basis.phi.T @ basis.phi, np.eye(order), atol=1e-10)


@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=20), st.floats(0.01, 1.0))
def test_select_order_is_minimal(energies, thr):
    e = np.sort(np.asarray(energies))[::-1]
    if not np.any(e > 0):
        return
    n = select_order(e, thr)
    assert 1 <= n <= e.size
    if thr < 1.0:
        ratio = np.cumsum(e) / e.sum()
        assert ratio[n - 1] >= thr - 1e-9
        if n > 1:
            assert ratio[n - 2] < thr
