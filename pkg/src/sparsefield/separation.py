"""Space-time separation of snapshot matrices (Karhunen-Loeve / POD).

The raw matrix is decomposed without mean-centering, so ``T = phi @ a``
holds for the measurements themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DimensionError, InsufficientDataError, NumericalError
from .field import SnapshotMatrix

__all__ = [
    "SbfBasis",
    "TemporalCoefficients",
    "separate",
    "select_order",
    "reconstruct",
    "project_coefficients",
    "truncate",
    "cumulative_energy",
    "ENERGY_MEASURES",
]


@dataclass(frozen=True)
class SbfBasis:
    """Orthonormal spatial basis functions plus the full singular spectrum.

    Attributes
    ----------
    phi : ndarray, shape (N, n)
        Retained spatial modes, one per column.
    energies : ndarray
        Per-mode energy of the training matrix, descending: squared singular
        values by default, plain singular values under the ``"singular"``
        measure.
    """

    phi: np.ndarray
    energies: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float, copy=True)
        if phi.ndim == 1:
            phi = phi[:, None]
        energies = np.array(self.energies, dtype=float, copy=True).ravel()
        if phi.ndim != 2 or phi.shape[1] < 1:
            raise DimensionError(f"basis must be N x n with n >= 1, got {phi.shape}")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(energies))):
            raise NumericalError("basis contains non-finite values")
        phi.setflags(write=False)
        energies.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "energies", energies)

    @property
    def order(self) -> int:
        return self.phi.shape[1]

    @property
    def n_sensors(self) -> int:
        return self.phi.shape[0]

    def energy_ratio(self) -> float:
        """Fraction of total energy carried by the retained modes."""
        total = self.energies.sum()
        return float(self.energies[: self.order].sum() / total) if total > 0 else 1.0


@dataclass(frozen=True)
class TemporalCoefficients:
    a: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        a = np.array(self.a, dtype=float, copy=True)
        if a.ndim == 1:
            a = a[:, None]
        if not np.all(np.isfinite(a)):
            raise NumericalError("temporal coefficients contain non-finite values")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def order(self) -> int:
        return self.a.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.a.shape[1]


def cumulative_energy(energies: np.ndarray) -> np.ndarray:
    energies = np.asarray(energies, dtype=float)
    return np.cumsum(energies) / energies.sum()


def select_order(energies, threshold: float = 0.99) -> int:
    """Smallest ``n`` whose leading energies reach ``threshold`` of the total."""
    energies = np.asarray(energies, dtype=float).ravel()
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"energy threshold must lie in (0, 1], got {threshold}")
    if energies.size == 0 or not np.any(energies > 0):
        raise DegenerateDataError("all energies are zero; no order can be selected")
    if np.any(energies < 0):
        raise ValueError("energies must be non-negative")
    if threshold >= 1.0:
        return int(np.flatnonzero(energies > 0)[-1]) + 1
    ratio = cumulative_energy(energies)
    # round-off in the cumulative sum must not push an exact boundary past the threshold
    n = int(np.searchsorted(ratio, threshold - 1e-12 * threshold, side="left")) + 1
    return min(n, energies.size)


def _fix_signs(u: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


ENERGY_MEASURES = ("squared", "singular")


def separate(snapshots: SnapshotMatrix, energy_threshold: float = 0.99,
             order: int | None = None, energy_measure: str = "squared",
             ) -> tuple[SbfBasis, TemporalCoefficients]:
    """Thin SVD of the snapshot matrix truncated by the energy ratio.

    Parameters
    ----------
    snapshots : SnapshotMatrix
    energy_threshold : float
        Fraction of the total energy the retained modes must reach.
    order : int, optional
        Overrides the energy rule when given.
    energy_measure : {"squared", "singular"}
        Whether a mode's energy is ``sigma**2`` or ``sigma``.  On raw,
        uncentred temperatures the squared measure is dominated by the mean
        level and almost always keeps a single mode.

    Each basis column is sign-normalised so its largest-magnitude entry is
    positive.
    """
    if energy_measure not in ENERGY_MEASURES:
        raise ValueError(f"energy_measure must be one of {ENERGY_MEASURES}, got {energy_measure!r}")
    data = snapshots.data
    if data.shape[1] < 2:
        raise InsufficientDataError("space-time separation needs at least 2 snapshots")
    try:
        u, s, _ = np.linalg.svd(data, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    energies = s ** 2 if energy_measure == "squared" else s.copy()
    n = select_order(energies, energy_threshold) if order is None else int(order)
    if not 1 <= n <= energies.size:
        raise ValueError(f"order {n} outside [1, {energies.size}]")
    phi = _fix_signs(u[:, :n])
    # project instead of reusing Vt so the sign flips stay consistent
    a = phi.T @ data
    return (SbfBasis(phi, energies),
            TemporalCoefficients(a, snapshots.dt, snapshots.t0))


def truncate(basis: SbfBasis, order: int) -> SbfBasis:
    if not 1 <= order <= basis.order:
        raise ValueError(f"cannot truncate order-{basis.order} basis to {order}")
    return SbfBasis(basis.phi[:, :order], basis.energies)


def reconstruct(basis: SbfBasis, coeffs: TemporalCoefficients) -> SnapshotMatrix:
    """``phi @ a`` as a snapshot matrix carrying the coefficients' timing."""
    if basis.order != coeffs.order:
        raise DimensionError(f"basis order {basis.order} != coefficient rows {coeffs.order}")
    return SnapshotMatrix(basis.phi @ coeffs.a, coeffs.dt, coeffs.t0)


def project_coefficients(basis: SbfBasis, snapshots: SnapshotMatrix) -> TemporalCoefficients:
    """Temporal coefficients ``phi.T @ T`` of (possibly new) snapshots."""
    if basis.n_sensors != snapshots.n_sensors:
        raise DimensionError(
            f"basis has {basis.n_sensors} rows, snapshots have {snapshots.n_sensors}"
        )
    return TemporalCoefficients(basis.phi.T @ snapshots.data, snapshots.dt, snapshots.t0)
