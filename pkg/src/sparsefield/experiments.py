"""Train/test protocol, evaluation and sensor sweeps shared by the CLI and
the scripts.

The first ``train_fraction`` of the snapshot columns trains every offline
component; the online loop then streams the whole record so the recurrent
state entering the test half has seen the training half, and errors are
scored separately on both halves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .field import SensorLayout, sample_sensors
from .io import Dataset
from .simulator import resample_frames
from .synthesis import (PipelineConfig, SpatioTemporalModel, field_values, fit_offline,
                        midpoint_grid, rmse, snae, stae, stream)
from .temporal import LstmModel

__all__ = [
    "EvalContext",
    "Evaluation",
    "SweepRow",
    "split_index",
    "evaluation_context",
    "fit_split",
    "evaluate",
    "fit_and_evaluate",
    "perfect_model",
    "anchor_sensor",
    "sweep_count",
    "sweep_scheme",
    "ILL_CONDITIONED",
]

log = logging.getLogger(__name__)

# completion operators above this condition number are flagged in sweeps
ILL_CONDITIONED = 1e6


def split_index(n_snapshots: int, train_fraction: float = 0.5) -> int:
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    l1 = int(np.floor(n_snapshots * train_fraction))
    if l1 < 2 or n_snapshots - l1 < 1:
        raise ConfigError(f"cannot split {n_snapshots} snapshots at fraction {train_fraction}")
    return l1


@dataclass
class EvalContext:
    """Evaluation grid plus the truth resampled onto it.

    ``truth[k]`` belongs to snapshot column ``columns[k]``.  Without fine-grid
    frames the grid is the sensor grid itself and the truth is the measured
    full-sensing data.
    """

    xs: np.ndarray
    ys: np.ndarray
    areas: np.ndarray
    truth: np.ndarray
    columns: np.ndarray
    source: str

    @property
    def dynamic_range(self) -> float:
        return float(self.truth.max() - self.truth.min())


def evaluation_context(dataset: Dataset, nx: int = 48, ny: int = 64) -> EvalContext:
    """Midpoint grid over the sensor rectangle with truth on it."""
    grid = dataset.grid
    if dataset.has_truth:
        xs, ys, areas = midpoint_grid(grid.bounds(), nx, ny)
        truth = resample_frames(dataset.truth, dataset.truth_x, dataset.truth_y, xs, ys)
        return EvalContext(xs, ys, areas, truth, np.asarray(dataset.truth_index), "fine")
    xs, ys = grid.x_coords, grid.y_coords
    data = dataset.snapshots.data
    truth = data.T.reshape(-1, grid.n1, grid.n2)
    return EvalContext(xs, ys, np.ones((grid.n1, grid.n2)), truth,
                       np.arange(data.shape[1]), "sensors")


@dataclass
class Evaluation:
    train_rmse: float
    test_rmse: float
    dynamic_range: float
    times: np.ndarray
    snae: np.ndarray
    n_s: int
    n_f: int
    condition_number: float
    mode: str
    truth_source: str
    s_tag: tuple
    split: int

    def summary(self) -> dict:
        return {
            "s_tag": list(self.s_tag),
            "n_s": self.n_s,
            "n_f": self.n_f,
            "condition_number": self.condition_number,
            "train_rmse": self.train_rmse,
            "test_rmse": self.test_rmse,
            "dynamic_range": self.dynamic_range,
            "test_rmse_over_range": self.test_rmse / self.dynamic_range
            if self.dynamic_range > 0 else float("nan"),
            "mode": self.mode,
            "truth": self.truth_source,
            "train_snapshots": self.split,
        }


def fit_split(dataset: Dataset, s_tag, config: PipelineConfig = PipelineConfig(),
              train_fraction: float = 0.5, temporal: LstmModel | None = None
              ) -> SpatioTemporalModel:
    """Offline fit on the training columns of ``dataset``."""
    l1 = split_index(dataset.snapshots.n_snapshots, train_fraction)
    layout = SensorLayout(dataset.grid, tuple(s_tag))
    return fit_offline(dataset.snapshots.columns(0, l1), layout, dataset.inputs[:, :l1],
                       config, temporal)


def _score(pred_coeffs: np.ndarray, model: SpatioTemporalModel, ctx: EvalContext, l1: int):
    """Per-column STAE grids for every truth column that has a prediction."""
    have = ~np.isnan(pred_coeffs[0, ctx.columns])
    cols = ctx.columns[have]
    pred = field_values(model, pred_coeffs[:, cols], ctx.xs, ctx.ys)
    errors = stae(pred, ctx.truth[have])
    return cols, errors


def evaluate(model: SpatioTemporalModel, dataset: Dataset, ctx: EvalContext | None = None,
             mode: str = "teacher", train_fraction: float = 0.5) -> Evaluation:
    """Stream the record through the online loop and score both halves.

    In rollout mode the model runs free from the first test column on.
    """
    ctx = evaluation_context(dataset) if ctx is None else ctx
    snaps = dataset.snapshots
    l1 = split_index(snaps.n_snapshots, train_fraction)
    sparse = sample_sensors(snaps, model.layout)
    result = stream(model, sparse, dataset.inputs, mode, rollout_start=l1)
    cols, errors = _score(result.coeffs, model, ctx, l1)
    train = cols < l1
    if not np.any(train) or np.all(train):
        raise DimensionError("truth frames must cover both the training and the testing half")
    return Evaluation(
        train_rmse=rmse(errors[train], ctx.areas, snaps.dt),
        test_rmse=rmse(errors[~train], ctx.areas, snaps.dt),
        dynamic_range=ctx.dynamic_range,
        times=snaps.times[cols],
        snae=np.array([snae(e, ctx.areas) for e in errors]),
        n_s=model.basis_sparse.order,
        n_f=model.basis_full.order,
        condition_number=model.completion.condition_number,
        mode=mode,
        truth_source=ctx.source,
        s_tag=model.layout.s_tag,
        split=l1,
    )


def perfect_model(model: SpatioTemporalModel, dataset: Dataset, ctx: EvalContext | None = None,
                  train_fraction: float = 0.5) -> dict:
    """Errors when the exact full-sensing coefficients replace predictions.

    What remains is the spatial truncation (order plus spline) error, the
    floor any temporal model can reach.
    """
    ctx = evaluation_context(dataset) if ctx is None else ctx
    l1 = split_index(dataset.snapshots.n_snapshots, train_fraction)
    coeffs = model.basis_full.phi.T @ dataset.snapshots.data
    cols, errors = _score(coeffs, model, ctx, l1)
    train = cols < l1
    return {"train_rmse": rmse(errors[train], ctx.areas), "test_rmse": rmse(errors[~train], ctx.areas)}


def fit_and_evaluate(dataset: Dataset, s_tag, config: PipelineConfig = PipelineConfig(),
                     ctx: EvalContext | None = None, mode: str = "teacher",
                     train_fraction: float = 0.5, temporal: LstmModel | None = None):
    model = fit_split(dataset, s_tag, config, train_fraction, temporal)
    return model, evaluate(model, dataset, ctx, mode, train_fraction)


def anchor_sensor(dataset: Dataset, train_fraction: float = 0.5) -> int:
    """1-based tag of the sensor with the largest training variance."""
    l1 = split_index(dataset.snapshots.n_snapshots, train_fraction)
    return int(np.argmax(dataset.snapshots.data[:, :l1].var(axis=1))) + 1


@dataclass
class SweepRow:
    s_tag: tuple
    n_s: int
    n_f: int
    condition_number: float
    train_rmse: float
    test_rmse: float

    @property
    def ill_conditioned(self) -> bool:
        return not self.condition_number <= ILL_CONDITIONED

    def as_dict(self) -> dict:
        return {
            "sensors": len(self.s_tag),
            "s_tag": ";".join(str(t) for t in self.s_tag),
            "n_s": self.n_s,
            "n_f": self.n_f,
            "condition_number": self.condition_number,
            "ill_conditioned": self.ill_conditioned,
            "train_rmse": self.train_rmse,
            "test_rmse": self.test_rmse,
        }


def _shared_temporal(dataset, config, train_fraction) -> LstmModel:
    full = tuple(range(1, dataset.grid.size + 1))
    return fit_split(dataset, full, config, train_fraction).temporal


def _row(ev: Evaluation) -> SweepRow:
    return SweepRow(tuple(ev.s_tag), ev.n_s, ev.n_f, ev.condition_number,
                    ev.train_rmse, ev.test_rmse)


def sweep_count(dataset: Dataset, config: PipelineConfig = PipelineConfig(),
                ctx: EvalContext | None = None, counts=None, mode: str = "teacher",
                train_fraction: float = 0.5, reuse_temporal: bool = False) -> list[SweepRow]:
    """Sensors ``[1..k]`` for each ``k`` in ``counts`` (default ``1..N_f``)."""
    ctx = evaluation_context(dataset) if ctx is None else ctx
    counts = range(1, dataset.grid.size + 1) if counts is None else counts
    shared = _shared_temporal(dataset, config, train_fraction) if reuse_temporal else None
    rows = []
    for k in counts:
        _, ev = fit_and_evaluate(dataset, tuple(range(1, k + 1)), config, ctx, mode,
                                 train_fraction, shared)
        log.info("sweep-count k=%d test_rmse=%.4g", k, ev.test_rmse)
        rows.append(_row(ev))
    return rows


def sweep_scheme(dataset: Dataset, config: PipelineConfig = PipelineConfig(),
                 ctx: EvalContext | None = None, anchor: int | None = None,
                 partners=None, mode: str = "teacher", train_fraction: float = 0.5,
                 reuse_temporal: bool = False) -> tuple[list[SweepRow], SweepRow]:
    """Two-sensor schemes ``[anchor, partner]``; returns rows and the winner
    (lowest testing RMSE, first row on ties)."""
    ctx = evaluation_context(dataset) if ctx is None else ctx
    anchor = anchor_sensor(dataset, train_fraction) if anchor is None else int(anchor)
    n_full = dataset.grid.size
    if not 1 <= anchor <= n_full:
        raise ConfigError(f"anchor sensor {anchor} outside [1, {n_full}]")
    if partners is None:
        partners = [t for t in range(1, n_full + 1) if t != anchor]
    shared = _shared_temporal(dataset, config, train_fraction) if reuse_temporal else None
    rows = []
    for p in partners:
        _, ev = fit_and_evaluate(dataset, (anchor, int(p)), config, ctx, mode,
                                 train_fraction, shared)
        log.info("sweep-scheme [%d,%d] test_rmse=%.4g", anchor, p, ev.test_rmse)
        rows.append(_row(ev))
    if not rows:
        raise ConfigError("no partner sensors to sweep")
    winner = min(rows, key=lambda r: r.test_rmse)
    return rows, winner
