"""Synthetic pouch-cell surface temperatures from a 2-D heat equation.

    dT/dt = kappa * lap(T) + gain * q(x, y) * I(t)**2 - h * (T - T_amb)

on ``[0, width] x [0, length]`` with zero-flux edges, integrated with an
explicit finite-volume scheme on a cell-centred grid.  ``q`` is a unit-peak
Gaussian hot spot near the positive terminal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError
from .field import Grid2D, SnapshotMatrix

__all__ = [
    "DEFAULT_LADDER",
    "HeatSimConfig",
    "SimulationResult",
    "ladder_current",
    "resample_frames",
    "simulate",
    "stable_dt",
]

# (amps, seconds); a five-step load/rest cycle run twice, so the second half
# revisits the operating range seen during the first half
DEFAULT_LADDER: tuple[tuple[float, float], ...] = (
    (40.0, 200.0), (0.0, 200.0), (30.0, 200.0), (0.0, 200.0), (20.0, 200.0),
) * 2


@dataclass(frozen=True)
class HeatSimConfig:
    width: float = 0.150
    length: float = 0.200
    ambient: float = 25.0
    diffusivity: float = 1e-4
    convection: float = 2e-3
    source_center: tuple[float, float] | None = None  # (x, y)
    source_radius: float = 0.05
    source_gain: float = 3e-4
    nx: int = 60
    ny: int = 80
    sample_dt: float = 1.0
    sim_dt: float | None = None
    duration: float = 2000.0
    ladder: tuple[tuple[float, float], ...] = DEFAULT_LADDER
    sensors_x: int = 4
    sensors_y: int = 4
    noise_std: float = 0.05
    initial_temperature: float | None = None
    seed: int = 0

    def __post_init__(self):
        positive = {k: getattr(self, k) for k in
                    ("width", "length", "diffusivity", "source_radius", "sample_dt", "duration")}
        bad = [k for k, v in positive.items() if not v > 0]
        if bad:
            raise ConfigError(f"parameters must be positive: {bad}")
        if self.convection < 0 or self.source_gain < 0 or self.noise_std < 0:
            raise ConfigError("convection, source_gain and noise_std must be non-negative")
        if self.nx < 3 or self.ny < 3:
            raise ConfigError("fine grid needs at least 3 cells per direction")
        object.__setattr__(self, "ladder", tuple((float(a), float(s)) for a, s in self.ladder))
        if self.source_center is not None:
            object.__setattr__(self, "source_center", tuple(float(c) for c in self.source_center))

    @property
    def dx(self) -> float:
        return self.width / self.nx

    @property
    def dy(self) -> float:
        return self.length / self.ny

    @property
    def center(self) -> tuple[float, float]:
        if self.source_center is None:
            return (0.5 * self.width, 0.8 * self.length)
        return self.source_center

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.sample_dt))

    def x_cells(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    def y_cells(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dy

    def sensor_grid(self) -> Grid2D:
        return Grid2D.uniform(self.sensors_x, self.sensors_y, self.width, self.length)

    def max_stable_dt(self) -> float:
        dx2, dy2 = self.dx ** 2, self.dy ** 2
        return dx2 * dy2 / (2.0 * self.diffusivity * (dx2 + dy2))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ladder"] = [list(p) for p in self.ladder]
        if self.source_center is not None:
            d["source_center"] = list(self.source_center)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HeatSimConfig":
        d = dict(d)
        if "ladder" in d:
            d["ladder"] = tuple(tuple(p) for p in d["ladder"])
        if d.get("source_center") is not None:
            d["source_center"] = tuple(d["source_center"])
        return cls(**d)


def stable_dt(cfg: HeatSimConfig) -> float:
    """Integration step: ``cfg.sim_dt`` if given (and stable), otherwise the
    largest stable step that divides the sampling interval evenly."""
    limit = cfg.max_stable_dt()
    if cfg.sim_dt is not None:
        if not 0 < cfg.sim_dt <= limit:
            raise ConfigError(
                f"sim_dt={cfg.sim_dt} violates explicit stability limit {limit:.6g}"
            )
        return float(cfg.sim_dt)
    substeps = int(np.ceil(cfg.sample_dt / limit))
    return cfg.sample_dt / substeps


def ladder_current(levels: Sequence[tuple[float, float]], dt: float = 1.0) -> np.ndarray:
    """Piecewise-constant current sampled every ``dt`` seconds."""
    if not levels:
        raise ConfigError("current profile needs at least one level")
    if not dt > 0:
        raise ConfigError("dt must be positive")
    out = []
    for amps, seconds in levels:
        if not seconds > 0:
            raise ConfigError(f"level durations must be positive, got {seconds}")
        out.append(np.full(int(round(seconds / dt)), float(amps)))
    return np.concatenate(out)


@dataclass
class SimulationResult:
    """Fine-grid truth, the sensor snapshot matrix and the input series.

    ``truth[k]`` is the ``nx x ny`` field at ``times[k]``; ``inputs`` rows are
    ``[I, I**2]`` aligned with the snapshot columns.
    """

    config: HeatSimConfig
    truth: np.ndarray
    times: np.ndarray
    snapshots: SnapshotMatrix
    inputs: np.ndarray
    current: np.ndarray
    grid: Grid2D = field(repr=False, default=None)

    def interpolator(self, k: int) -> RegularGridInterpolator:
        cfg = self.config
        return RegularGridInterpolator((cfg.x_cells(), cfg.y_cells()), self.truth[k],
                                       bounds_error=False, fill_value=None)

    def truth_at(self, xs, ys) -> np.ndarray:
        """Bilinear truth on the tensor grid ``xs x ys`` for every sample,
        shape ``(L, len(xs), len(ys))``."""
        return resample_frames(self.truth, self.config.x_cells(), self.config.y_cells(), xs, ys)


def _axis_weights(points, centres) -> np.ndarray:
    """Linear interpolation matrix from cell centres to ``points`` (edge-clamped)."""
    points = np.asarray(points, dtype=float)
    w = np.zeros((points.size, centres.size))
    pos = np.interp(points, centres, np.arange(centres.size))
    lo = np.clip(np.floor(pos).astype(int), 0, centres.size - 2)
    frac = pos - lo
    w[np.arange(points.size), lo] = 1.0 - frac
    w[np.arange(points.size), lo + 1] += frac
    return w


def resample_frames(frames: np.ndarray, x_cells, y_cells, xs, ys) -> np.ndarray:
    """Bilinear resampling of ``(L, nx, ny)`` frames onto the grid ``xs x ys``."""
    wx = _axis_weights(xs, np.asarray(x_cells, dtype=float))
    wy = _axis_weights(ys, np.asarray(y_cells, dtype=float))
    return np.einsum("pi,kij,qj->kpq", wx, frames, wy)


def source_shape(cfg: HeatSimConfig) -> np.ndarray:
    xx, yy = np.meshgrid(cfg.x_cells(), cfg.y_cells(), indexing="ij")
    cx, cy = cfg.center
    return np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * cfg.source_radius ** 2))


def simulate(cfg: HeatSimConfig = HeatSimConfig(), current: np.ndarray | None = None,
             keep_truth: bool = True) -> SimulationResult:
    """Integrate the heat equation and sample the sensor grid once per
    ``sample_dt``.

    ``current`` overrides the ladder profile (one value per sample).  Sensor
    readings get i.i.d. Gaussian noise of ``cfg.noise_std`` from ``cfg.seed``.
    """
    dt = stable_dt(cfg)
    substeps = int(round(cfg.sample_dt / dt))
    n = cfg.n_samples
    if current is None:
        current = ladder_current(cfg.ladder, cfg.sample_dt)
    current = np.asarray(current, dtype=float)
    if current.size < n:
        raise ConfigError(f"current profile has {current.size} samples, need {n}")
    current = current[:n]

    t0 = cfg.ambient if cfg.initial_temperature is None else cfg.initial_temperature
    temp = np.full((cfg.nx, cfg.ny), float(t0))
    q = source_shape(cfg) * cfg.source_gain
    rx = cfg.diffusivity * dt / cfg.dx ** 2
    ry = cfg.diffusivity * dt / cfg.dy ** 2
    relax = cfg.convection * dt

    grid = cfg.sensor_grid()
    wx = _axis_weights(grid.x_coords, cfg.x_cells())
    wy = _axis_weights(grid.y_coords, cfg.y_cells())

    truth = np.empty((n, cfg.nx, cfg.ny)) if keep_truth else None
    sensors = np.empty((grid.size, n))
    padded = np.empty((cfg.nx + 2, cfg.ny + 2))
    for k in range(n):
        heat = q * (current[k] ** 2 * dt)
        for _ in range(substeps):
            padded[1:-1, 1:-1] = temp
            padded[0, 1:-1] = temp[0]
            padded[-1, 1:-1] = temp[-1]
            padded[1:-1, 0] = temp[:, 0]
            padded[1:-1, -1] = temp[:, -1]
            lap = (rx * (padded[2:, 1:-1] + padded[:-2, 1:-1])
                   + ry * (padded[1:-1, 2:] + padded[1:-1, :-2])
                   - (2.0 * (rx + ry)) * temp)
            temp = temp + lap + heat - relax * (temp - cfg.ambient)
        if keep_truth:
            truth[k] = temp
        sensors[:, k] = (wx @ temp @ wy.T).ravel()

    rng = np.random.default_rng(cfg.seed)
    if cfg.noise_std > 0:
        sensors = sensors + rng.normal(0.0, cfg.noise_std, sensors.shape)
    times = cfg.sample_dt * np.arange(1, n + 1)
    snaps = SnapshotMatrix(sensors, cfg.sample_dt, float(times[0]))
    inputs = np.vstack([current, current ** 2])
    return SimulationResult(cfg, truth, times, snaps, inputs, current, grid)
