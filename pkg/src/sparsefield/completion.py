"""Discrete space completion: full-sensing coefficients from sparse readings.

The recovery operator is ``(Phi_s.T @ M @ Phi_f)^+``; applying it to the sparse
coefficients ``Phi_s.T @ T_s`` yields the full coefficients, and
``Phi_f`` maps those back to every offline sensor location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError
from .separation import SbfBasis, TemporalCoefficients

__all__ = [
    "CompletionOperator",
    "pinv",
    "build_completion",
    "recover_full_coefficients",
    "complete_snapshot",
]


def pinv(matrix, rcond: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through the SVD.

    Singular values below ``rcond * sigma_max`` are treated as zero.  The
    default ``rcond`` is ``max(rows, cols) * eps``.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"pinv expects a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("pinv of a non-finite matrix")
    m, n = a.shape
    if a.size == 0:
        return np.zeros((n, m))
    if rcond is None:
        rcond = max(m, n) * np.finfo(float).eps
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((n, m))
    keep = s > rcond * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


@dataclass(frozen=True)
class CompletionOperator:
    recovery: np.ndarray
    basis_sparse: SbfBasis
    basis_full: SbfBasis
    mapping: np.ndarray
    condition_number: float = float("nan")

    def __post_init__(self):
        rec = np.array(self.recovery, dtype=float, copy=True)
        if not np.all(np.isfinite(rec)):
            raise NumericalError("recovery operator is not finite")
        if rec.shape != (self.basis_full.order, self.basis_sparse.order):
            raise DimensionError(
                f"recovery shape {rec.shape} != ({self.basis_full.order}, {self.basis_sparse.order})"
            )
        rec.setflags(write=False)
        object.__setattr__(self, "recovery", rec)

    @property
    def n_full_sensors(self) -> int:
        return self.basis_full.n_sensors

    @property
    def n_sparse_sensors(self) -> int:
        return self.basis_sparse.n_sensors

    def sparse_to_full(self) -> np.ndarray:
        """Composite ``N_f x N_s`` matrix ``Phi_f R Phi_s.T``."""
        return self.basis_full.phi @ self.recovery @ self.basis_sparse.phi.T


def _condition(inner: np.ndarray) -> float:
    s = np.linalg.svd(inner, compute_uv=False)
    k = min(inner.shape)
    # a wide inner matrix (n_s < n_f) is rank deficient as a map onto R^{n_f}
    if inner.shape[0] < inner.shape[1] or s[k - 1] == 0.0:
        return float("inf")
    return float(s[0] / s[k - 1])


def build_completion(basis_sparse: SbfBasis, basis_full: SbfBasis, mapping,
                     rcond: float | None = None) -> CompletionOperator:
    """Assemble the recovery operator for a given pair of bases.

    ``condition_number`` on the result is ``cond(Phi_s.T M Phi_f)``; it is
    infinite when the sparse side cannot determine all full modes.
    """
    mapping = np.asarray(mapping, dtype=float)
    if mapping.shape != (basis_sparse.n_sensors, basis_full.n_sensors):
        raise DimensionError(
            f"mapping shape {mapping.shape} does not match bases "
            f"({basis_sparse.n_sensors}, {basis_full.n_sensors})"
        )
    inner = basis_sparse.phi.T @ mapping @ basis_full.phi
    return CompletionOperator(pinv(inner, rcond), basis_sparse, basis_full,
                              mapping.copy(), _condition(inner))


def recover_full_coefficients(op: CompletionOperator,
                              a_sparse: TemporalCoefficients) -> TemporalCoefficients:
    if a_sparse.order != op.recovery.shape[1]:
        raise DimensionError(
            f"expected {op.recovery.shape[1]} sparse coefficient rows, got {a_sparse.order}"
        )
    return TemporalCoefficients(op.recovery @ a_sparse.a, a_sparse.dt, a_sparse.t0)


def complete_snapshot(op: CompletionOperator, t_sparse) -> np.ndarray:
    """Virtual-sensor estimate at all ``N_f`` locations from ``N_s`` readings.

    Accepts a single vector or an ``N_s x L`` block of columns.
    """
    t = np.asarray(t_sparse, dtype=float)
    if t.shape[0] != op.n_sparse_sensors:
        raise DimensionError(f"expected {op.n_sparse_sensors} sparse readings, got {t.shape[0]}")
    a_s = op.basis_sparse.phi.T @ t
    return op.basis_full.phi @ (op.recovery @ a_s)
