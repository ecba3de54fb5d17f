"""Grids, sensor layouts and snapshot matrices.

Sensor tags are 1-based and row-major over the grid: tag ``(j1 - 1) * n2 + j2``
sits at ``(x_coords[j1 - 1], y_coords[j2 - 1])``.  Internally everything is
0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, LayoutError, NumericalError

__all__ = [
    "Grid2D",
    "SensorLayout",
    "SnapshotMatrix",
    "build_mapping_matrix",
    "sample_sensors",
    "reshape_sbf_column",
    "flatten_sbf",
]


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Rectangular full-sensing arrangement with ``n1`` rows along x and
    ``n2`` columns along y."""

    x_coords: np.ndarray
    y_coords: np.ndarray

    def __post_init__(self):
        x = _frozen_array(self.x_coords)
        y = _frozen_array(self.y_coords)
        if x.ndim != 1 or y.ndim != 1:
            raise LayoutError("grid coordinates must be one-dimensional")
        if x.size < 4 or y.size < 4:
            raise LayoutError(
                f"cubic B-spline surfaces need at least 4 sensors per direction, "
                f"got {x.size}x{y.size}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise LayoutError("grid coordinates must be finite")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise LayoutError("grid coordinates must be strictly increasing")
        object.__setattr__(self, "x_coords", x)
        object.__setattr__(self, "y_coords", y)

    def __eq__(self, other):
        if not isinstance(other, Grid2D):
            return NotImplemented
        return (np.array_equal(self.x_coords, other.x_coords)
                and np.array_equal(self.y_coords, other.y_coords))

    def __hash__(self):
        return hash((self.x_coords.tobytes(), self.y_coords.tobytes()))

    @property
    def n1(self) -> int:
        return int(self.x_coords.size)

    @property
    def n2(self) -> int:
        return int(self.y_coords.size)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @classmethod
    def uniform(cls, n1: int, n2: int, width: float, length: float,
                cell_centered: bool = True) -> "Grid2D":
        """Evenly spaced sensors over ``[0, width] x [0, length]``.

        With ``cell_centered`` the sensors sit at the centres of an
        ``n1 x n2`` partition of the rectangle, otherwise they include the
        edges.
        """
        if cell_centered:
            x = (np.arange(n1) + 0.5) * width / n1
            y = (np.arange(n2) + 0.5) * length / n2
        else:
            x = np.linspace(0.0, width, n1)
            y = np.linspace(0.0, length, n2)
        return cls(x, y)

    def sensor_positions(self) -> np.ndarray:
        """``(n1 * n2, 2)`` array of sensor coordinates in tag order."""
        xx, yy = np.meshgrid(self.x_coords, self.y_coords, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def bounds(self) -> tuple[float, float, float, float]:
        return (float(self.x_coords[0]), float(self.x_coords[-1]),
                float(self.y_coords[0]), float(self.y_coords[-1]))

    def to_dict(self) -> dict:
        return {"n1": self.n1, "n2": self.n2,
                "x_coords": self.x_coords.tolist(),
                "y_coords": self.y_coords.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid2D":
        grid = cls(d["x_coords"], d["y_coords"])
        if "n1" in d and (d["n1"], d["n2"]) != (grid.n1, grid.n2):
            raise LayoutError("n1/n2 disagree with coordinate lengths")
        return grid


@dataclass(frozen=True)
class SensorLayout:
    """Sparse sensor selection on top of a full-sensing grid.

    ``s_tag`` holds 1-based tag numbers in the order the sparse rows appear.
    """

    grid: Grid2D
    s_tag: tuple[int, ...]
    n_full: int = field(default=-1)

    def __post_init__(self):
        tags = tuple(int(t) for t in np.atleast_1d(self.s_tag))
        n_full = self.grid.size if self.n_full == -1 else int(self.n_full)
        object.__setattr__(self, "s_tag", tags)
        object.__setattr__(self, "n_full", n_full)
        if n_full != self.grid.size:
            raise LayoutError(
                f"n_full={n_full} does not match grid size {self.grid.n1}x{self.grid.n2}"
            )
        if len(tags) == 0:
            raise LayoutError("s_tag must contain at least one sensor")
        if len(set(tags)) != len(tags):
            raise LayoutError(f"duplicate sensor tags in {list(tags)}")
        bad = [t for t in tags if not 1 <= t <= n_full]
        if bad:
            raise LayoutError(f"sensor tags {bad} outside [1, {n_full}]")

    @property
    def n_sparse(self) -> int:
        return len(self.s_tag)

    @property
    def indices(self) -> np.ndarray:
        """0-based row indices into the full snapshot matrix."""
        return np.asarray(self.s_tag, dtype=int) - 1

    @classmethod
    def full(cls, grid: Grid2D) -> "SensorLayout":
        return cls(grid, tuple(range(1, grid.size + 1)))

    def to_dict(self) -> dict:
        return {"n_full": self.n_full, "s_tag": list(self.s_tag),
                "grid": self.grid.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorLayout":
        return cls(Grid2D.from_dict(d["grid"]), tuple(d["s_tag"]),
                   int(d.get("n_full", -1)))


@dataclass(frozen=True)
class SnapshotMatrix:
    """Sensors x time matrix of readings sampled every ``dt`` seconds."""

    data: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[1] < 1:
            raise DimensionError(f"snapshot data must be N x L with L >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NumericalError("snapshot matrix contains non-finite entries")
        if not self.dt > 0:
            raise DimensionError("dt must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def n_sensors(self) -> int:
        return self.data.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_snapshots)

    def columns(self, start: int, stop: int | None = None) -> "SnapshotMatrix":
        """Sub-matrix of columns ``start:stop`` with a shifted ``t0``."""
        stop = self.n_snapshots if stop is None else stop
        return SnapshotMatrix(self.data[:, start:stop], self.dt,
                              self.t0 + start * self.dt)


def build_mapping_matrix(layout: SensorLayout) -> np.ndarray:
    """Binary ``N_s x N_f`` selector with ``M[i, s_i - 1] = 1``."""
    m = np.zeros((layout.n_sparse, layout.n_full))
    m[np.arange(layout.n_sparse), layout.indices] = 1.0
    return m


def sample_sensors(full: SnapshotMatrix, layout: SensorLayout) -> SnapshotMatrix:
    """Rows of ``full`` picked out by the layout's tags (``T_s = M T_f``)."""
    if full.n_sensors != layout.n_full:
        raise DimensionError(
            f"full snapshot matrix has {full.n_sensors} rows, layout expects {layout.n_full}"
        )
    return SnapshotMatrix(full.data[layout.indices], full.dt, full.t0)


def reshape_sbf_column(zeta: Sequence[float], grid: Grid2D) -> np.ndarray:
    """Row-major reshape of a length ``n1*n2`` vector to an ``n1 x n2`` matrix."""
    if not isinstance(grid, Grid2D):
        grid = Grid2D(*grid)
    zeta = np.asarray(zeta, dtype=float)
    if zeta.ndim != 1 or zeta.size != grid.size:
        raise DimensionError(f"vector of length {zeta.size} cannot fill a {grid.n1}x{grid.n2} grid")
    return zeta.reshape(grid.n1, grid.n2).copy()


def flatten_sbf(phi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`reshape_sbf_column`."""
    return np.asarray(phi, dtype=float).reshape(-1).copy()
