"""Offline fit, online sparse-sensing prediction and error metrics.

The offline stage separates the full and sparse training matrices, builds the
completion operator and the continuous basis surfaces, and trains the
temporal model on full coefficients.  Online, each sparse reading is lifted to
full coefficients, pushed one step ahead by the temporal model and expanded
over the surfaces, which yields a temperature function on the whole sensor
rectangle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .completion import CompletionOperator, build_completion
from .errors import (ConfigError, DimensionError, InsufficientDataError, SparseFieldError,
                     StageError)
from .field import Grid2D, SensorLayout, SnapshotMatrix, build_mapping_matrix, sample_sensors
from .separation import SbfBasis, separate
from .spline import SplineSurfaceSet, build_continuous_sbfs, fit_residual
from .temporal import (LstmModel, LstmState, TrainConfig, build_features, lstm_step,
                       new_state, predict_sequence, train)

__all__ = [
    "PipelineConfig",
    "SpatioTemporalModel",
    "StreamResult",
    "fit_offline",
    "predict_field",
    "stream",
    "field_values",
    "midpoint_grid",
    "stae",
    "snae",
    "rmse",
]

log = logging.getLogger(__name__)

MODES = ("teacher", "rollout")


@dataclass(frozen=True)
class PipelineConfig:
    """Offline-fit settings.

    ``energy_measure`` picks how modes are weighed by the order rule; see
    :func:`sparsefield.separation.separate`.  ``sparse_threshold`` defaults to
    ``threshold``.
    """

    threshold: float = 0.99
    sparse_threshold: float | None = None
    energy_measure: str = "singular"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(residual=True))

    def __post_init__(self):
        for name in ("threshold", "sparse_threshold"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "sparse_threshold": self.sparse_threshold,
                "energy_measure": self.energy_measure, "train": self.train.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["train"] = TrainConfig(**d.get("train", {}))
        return cls(**d)


@dataclass(frozen=True)
class SpatioTemporalModel:
    layout: SensorLayout
    basis_sparse: SbfBasis
    basis_full: SbfBasis
    completion: CompletionOperator
    surfaces: SplineSurfaceSet
    temporal: LstmModel
    config: PipelineConfig = field(default_factory=PipelineConfig)
    report: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.surfaces) != self.basis_full.order:
            raise DimensionError(
                f"{len(self.surfaces)} surfaces for a basis of order {self.basis_full.order}"
            )
        if (self.completion.basis_full is not self.basis_full
                or self.completion.basis_sparse is not self.basis_sparse):
            raise ConfigError("completion operator was built from different bases")
        if not np.array_equal(self.completion.mapping, build_mapping_matrix(self.layout)):
            raise ConfigError("completion operator was built for a different layout")

    @property
    def order(self) -> int:
        return self.basis_full.order

    @property
    def grid(self) -> Grid2D:
        return self.layout.grid

    def sparse_to_full_coeffs(self, t_sparse) -> np.ndarray:
        """Full coefficients recovered from sparse readings (vector or block)."""
        t = np.asarray(t_sparse, dtype=float)
        if t.shape[0] != self.layout.n_sparse:
            raise DimensionError(f"expected {self.layout.n_sparse} sparse readings, got {t.shape[0]}")
        return self.completion.recovery @ (self.basis_sparse.phi.T @ t)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SparseFieldError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def fit_offline(full_snapshots: SnapshotMatrix, layout: SensorLayout, inputs,
                config: PipelineConfig = PipelineConfig(),
                temporal: LstmModel | None = None) -> SpatioTemporalModel:
    """Fit every offline component from full-sensing training data.

    Parameters
    ----------
    full_snapshots : SnapshotMatrix
        ``N_f x l_1`` training matrix in tag order.
    layout : SensorLayout
        Online sensor subset.
    inputs : ndarray, shape (n_u, l_1)
        System inputs aligned column-by-column with the snapshots.
    config : PipelineConfig
    temporal : LstmModel, optional
        Reuse an already trained temporal model instead of training one; it
        must predict the same number of full coefficients.

    Notes
    -----
    The temporal model is trained with regressors built from coefficients
    recovered through completion (what is available online) and targets
    taken from the full-sensing projection.  Errors raised by a stage are
    wrapped in :class:`StageError` carrying the stage name.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.shape[1] != full_snapshots.n_snapshots:
        raise StageError("alignment", DimensionError(
            f"inputs have {inputs.shape[1]} columns, snapshots {full_snapshots.n_snapshots}"))
    if full_snapshots.n_sensors != layout.grid.size:
        raise StageError("alignment", DimensionError(
            f"snapshots have {full_snapshots.n_sensors} rows, layout grid {layout.grid.size}"))

    sparse_thr = config.threshold if config.sparse_threshold is None else config.sparse_threshold
    sparse = _stage("sampling", sample_sensors, full_snapshots, layout)
    basis_f, coeff_f = _stage("separation", separate, full_snapshots, config.threshold,
                              energy_measure=config.energy_measure)
    basis_s, _ = _stage("separation", separate, sparse, sparse_thr,
                        energy_measure=config.energy_measure)
    mapping = build_mapping_matrix(layout)
    comp = _stage("completion", build_completion, basis_s, basis_f, mapping)
    surfaces = _stage("spline", build_continuous_sbfs, basis_f, layout.grid)

    recovered = comp.recovery @ (basis_s.phi.T @ sparse.data)
    cfg = config.train
    d, _ = _stage("temporal", build_features, recovered, inputs, cfg.lag_a, cfg.lag_u,
                  cfg.current_input)
    _, target = _stage("temporal", build_features, coeff_f.a, inputs, cfg.lag_a, cfg.lag_u,
                       cfg.current_input)
    if temporal is None:
        lstm = _stage("temporal", train, [(d, target)], cfg, inputs.shape[0])
    elif temporal.n_coeffs != basis_f.order or temporal.n_inputs != inputs.shape[0]:
        raise StageError("temporal", DimensionError(
            f"reused temporal model predicts {temporal.n_coeffs} coefficients from "
            f"{temporal.n_inputs} inputs; need {basis_f.order} and {inputs.shape[0]}"))
    else:
        lstm = temporal

    report = {
        "n_f": basis_f.order,
        "n_s": basis_s.order,
        "energy_ratio_full": basis_f.energy_ratio(),
        "energy_ratio_sparse": basis_s.energy_ratio(),
        "energies_full": basis_f.energies.tolist(),
        "energies_sparse": basis_s.energies.tolist(),
        "condition_number": comp.condition_number,
        "spline_residual_max": float(np.max(np.abs(fit_residual(surfaces, basis_f, layout.grid)))),
        "completion_rms": float(np.sqrt(np.mean((recovered - coeff_f.a) ** 2))),
        **{f"lstm_{k}": v for k, v in lstm.report.items()},
    }
    log.info("offline fit: n_f=%d n_s=%d cond=%.3g", basis_f.order, basis_s.order,
             comp.condition_number)
    return SpatioTemporalModel(layout, basis_s, basis_f, comp, surfaces, lstm, config, report)


def field_function(surfaces: SplineSurfaceSet, coeffs) -> Callable:
    """Closure ``(x, y) -> sum_i coeffs[i] * psi_i(x, y)``."""
    coeffs = np.array(coeffs, dtype=float).ravel()
    if coeffs.size != len(surfaces):
        raise DimensionError(f"{coeffs.size} coefficients for {len(surfaces)} surfaces")

    def temperature(x, y):
        vals = surfaces.values(x, y)
        return np.tensordot(coeffs, vals, axes=(0, 0))

    return temperature


def predict_field(model: SpatioTemporalModel, t_sparse, u_now, state: LstmState | None = None):
    """One online step.

    Parameters
    ----------
    t_sparse : array_like, length N_s
        Latest sparse readings (time ``t-1``).
    u_now : array_like, length n_u
        Input at the prediction time ``t``.
    state : LstmState, optional
        Recurrent state from the previous call; ``None`` starts a new stream.

    Returns
    -------
    field : callable
        ``field(x, y)`` evaluates the predicted temperature; raises
        :class:`DomainError` outside the sensor rectangle.
    a_hat : ndarray
        Predicted full coefficients.
    state : LstmState
    """
    from .temporal import predict_step

    a_f = model.sparse_to_full_coeffs(np.asarray(t_sparse, dtype=float).ravel())
    a_hat, state = predict_step(model.temporal, a_f, u_now, state)
    return field_function(model.surfaces, a_hat), a_hat, state


@dataclass
class StreamResult:
    """Coefficient predictions for columns ``1 .. L-1`` of a stream.

    ``coeffs[:, k]`` predicts column ``k``; column 0 has no prediction and is
    filled with NaN.
    """

    coeffs: np.ndarray
    recovered: np.ndarray
    mode: str
    rollout_start: int | None = None


def stream(model: SpatioTemporalModel, sparse, inputs, mode: str = "teacher",
           rollout_start: int | None = None) -> StreamResult:
    """Run the online loop over a block of sparse readings.

    Parameters
    ----------
    sparse : ndarray, shape (N_s, L)
    inputs : ndarray, shape (n_u, L)
    mode : {"teacher", "rollout"}
        Teacher forcing feeds the coefficients recovered from each measured
        column; rollout feeds the model's own previous prediction from
        ``rollout_start`` on (default: the second column).
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    sparse = np.asarray(sparse.data if isinstance(sparse, SnapshotMatrix) else sparse, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if sparse.shape[1] != inputs.shape[1]:
        raise DimensionError(f"{sparse.shape[1]} sparse columns vs {inputs.shape[1]} input columns")
    if sparse.shape[1] < 2:
        raise InsufficientDataError("a stream needs at least 2 columns")
    lstm = model.temporal
    cfg = lstm.config
    recovered = model.sparse_to_full_coeffs(sparse)
    length = sparse.shape[1]
    out = np.full((model.order, length), np.nan)
    start = 1 if rollout_start is None else int(rollout_start)

    if mode == "teacher" or start >= length:
        d, _ = build_features(recovered, inputs, cfg.lag_a, cfg.lag_u, cfg.current_input)
        p = length - d.shape[0]
        out[:, p:] = predict_sequence(lstm, d).T
        return StreamResult(out, recovered, "teacher")

    if not 1 <= start:
        raise ConfigError("rollout_start must be at least 1")
    state = new_state(lstm)
    fed = recovered.copy()
    for k in range(1, length):
        _, a_hat, state = _step_lagged(lstm, fed, inputs, k, state)
        out[:, k] = a_hat
        if k >= start:
            fed[:, k] = a_hat
    return StreamResult(out, recovered, "rollout", start)


def _step_lagged(lstm: LstmModel, coeffs, inputs, k: int, state: LstmState):
    """Step the LSTM to predict column ``k`` from lagged columns of ``coeffs``."""
    cfg = lstm.config
    shift = 0 if cfg.current_input else 1
    lags_a = [coeffs[:, k - j] if k - j >= 0 else np.zeros(coeffs.shape[0])
              for j in range(1, cfg.lag_a + 1)]
    lags_u = [inputs[:, k - j - shift] if k - j - shift >= 0 else np.zeros(inputs.shape[0])
              for j in range(cfg.lag_u)]
    d = np.concatenate(lags_a + lags_u)
    state = state.copy()
    state.h, state.c, a_hat = lstm_step(lstm, d, state.h, state.c)
    return d, a_hat, state


# ----------------------------------------------------------------------------
# evaluation grid and metrics


def midpoint_grid(bounds, nx: int = 48, ny: int = 64):
    """Cell-centre coordinates and cell areas of a uniform ``nx x ny`` grid."""
    x0, x1, y0, y1 = (float(b) for b in bounds)
    if nx < 1 or ny < 1:
        raise ConfigError("evaluation grid needs at least one cell per direction")
    if not (x1 > x0 and y1 > y0):
        raise ConfigError(f"empty evaluation rectangle {bounds}")
    dx = (x1 - x0) / nx
    dy = (y1 - y0) / ny
    xs = x0 + (np.arange(nx) + 0.5) * dx
    ys = y0 + (np.arange(ny) + 0.5) * dy
    return xs, ys, np.full((nx, ny), dx * dy)


def field_values(model: SpatioTemporalModel, coeffs, xs, ys) -> np.ndarray:
    """Predicted temperatures on the tensor grid for each coefficient column,
    shape ``(L, len(xs), len(ys))``."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if coeffs.shape[0] != model.order:
        coeffs = coeffs.T
    vals = model.surfaces.grid_values(xs, ys)
    return np.einsum("il,ipq->lpq", coeffs, vals)


def stae(predicted, truth) -> np.ndarray:
    """Pointwise absolute error ``|T_hat - T|``."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predicted.shape != truth.shape:
        raise DimensionError(f"shape mismatch {predicted.shape} vs {truth.shape}")
    return np.abs(predicted - truth)


def _areas(areas, shape) -> np.ndarray:
    areas = np.broadcast_to(np.asarray(areas, dtype=float), shape)
    if not areas.sum() > 0:
        raise ConfigError("total cell area must be positive")
    return areas


def _weighted_mean(values: np.ndarray, areas: np.ndarray, axes) -> np.ndarray:
    # ratio of sums, so a constant grid gives back the constant exactly
    return np.sum(areas * values, axis=axes) / np.sum(areas)


def snae(stae_grid, areas=1.0) -> float:
    """Area-weighted spatial mean of one STAE grid."""
    grid = np.asarray(stae_grid, dtype=float)
    if grid.size == 0:
        raise InsufficientDataError("empty STAE grid")
    top = np.max(np.abs(grid))
    if top == 0:
        return 0.0
    return float(top * _weighted_mean(grid / top, _areas(areas, grid.shape), None))


def rmse(stae_grids, areas=1.0, dt: float = 1.0) -> float:
    """Space-time RMS of a stack of STAE grids (first axis is time).

    With equispaced snapshots the sampling interval cancels between the time
    integral and its normaliser, so ``dt`` only has to be positive.
    """
    grids = np.asarray(stae_grids, dtype=float)
    if grids.ndim < 1 or grids.shape[0] == 0 or grids.size == 0:
        raise InsufficientDataError("rmse needs at least one snapshot")
    if not dt > 0:
        raise ConfigError("dt must be positive")
    top = np.max(np.abs(grids))
    if top == 0:
        return 0.0
    scaled = grids / top
    axes = tuple(range(1, grids.ndim))
    per_snapshot = _weighted_mean(scaled ** 2, _areas(areas, grids.shape[1:]), axes)
    return float(top * np.sqrt(np.mean(per_snapshot)))
