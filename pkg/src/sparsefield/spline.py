"""Clamped cubic B-spline surfaces over a sensor grid.

Each discrete spatial mode (an ``n1 x n2`` matrix) is used as the control net
of a tensor-product cubic B-spline.  Physical coordinates are mapped to
parameters through ``x(u) = sum_j V_j(u) x_j`` and its inverse, found by
bisection because the map is strictly increasing.

Basis indices are 0-based here: ``basis(0, 3, u, kv)`` is the first cubic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, DomainError, NumericalError
from .field import Grid2D, reshape_sbf_column
from .separation import SbfBasis

__all__ = [
    "DEGREE",
    "KnotVector",
    "knot_vector",
    "basis",
    "basis_matrix",
    "invert_parameter",
    "SplineSurface",
    "SplineSurfaceSet",
    "eval_surface",
    "build_continuous_sbfs",
    "least_squares_projection",
]

DEGREE = 3


@dataclass(frozen=True)
class KnotVector:
    knots: tuple[float, ...]

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        if len(knots) < 2 * (DEGREE + 1):
            raise ValueError("a clamped cubic knot vector needs at least 8 knots")
        if any(b < a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be non-decreasing")
        object.__setattr__(self, "knots", knots)

    @property
    def n_points(self) -> int:
        return len(self.knots) - DEGREE - 1

    def as_array(self) -> np.ndarray:
        return np.asarray(self.knots)

    def interior(self) -> tuple[float, ...]:
        return self.knots[DEGREE + 1: -(DEGREE + 1)]

    def __len__(self):
        return len(self.knots)


def knot_vector(n_points: int) -> KnotVector:
    """Clamped quasi-uniform cubic knots for ``n_points`` control points.

    >>> knot_vector(5).knots
    (0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0)
    """
    n_points = int(n_points)
    if n_points < DEGREE + 1:
        raise ValueError(f"need at least {DEGREE + 1} control points, got {n_points}")
    spans = n_points - DEGREE
    interior = [k / spans for k in range(1, spans)]
    return KnotVector((0.0,) * 4 + tuple(interior) + (1.0,) * 4)


def _last_open_span(knots) -> int:
    j = len(knots) - 2
    while knots[j] >= knots[j + 1]:
        j -= 1
    return j


def basis(j: int, k: int, u: float, knots) -> float:
    """Value of the ``j``-th degree-``k`` B-spline at ``u`` (Cox-de Boor).

    0/0 terms count as zero.  At the right end of the parameter range the
    last non-empty degree-0 interval is closed so the basis still sums to 1.
    """
    t = knots.knots if isinstance(knots, KnotVector) else tuple(knots)
    if k == 0:
        if t[j] <= u < t[j + 1]:
            return 1.0
        if u == t[-1] and j == _last_open_span(t):
            return 1.0
        return 0.0
    left = 0.0
    den = t[j + k] - t[j]
    if den != 0.0:
        left = (u - t[j]) / den * basis(j, k - 1, u, t)
    right = 0.0
    den = t[j + k + 1] - t[j + 1]
    if den != 0.0:
        right = (t[j + k + 1] - u) / den * basis(j + 1, k - 1, u, t)
    return left + right


def basis_matrix(u, knots: KnotVector, degree: int = DEGREE) -> np.ndarray:
    """All basis values at many parameters at once, shape ``(len(u), N)``."""
    t = knots.as_array()
    u = np.atleast_1d(np.asarray(u, dtype=float))
    m = t.size - 1
    b = ((t[:-1][None, :] <= u[:, None]) & (u[:, None] < t[1:][None, :])).astype(float)
    b[u == t[-1], _last_open_span(t)] = 1.0
    for k in range(1, degree + 1):
        n = m - k
        nxt = np.zeros((u.size, n))
        for j in range(n):
            den = t[j + k] - t[j]
            if den != 0.0:
                nxt[:, j] += (u - t[j]) / den * b[:, j]
            den = t[j + k + 1] - t[j + 1]
            if den != 0.0:
                nxt[:, j] += (t[j + k + 1] - u) / den * b[:, j + 1]
        b = nxt
    return b


def _check_domain(x: np.ndarray, lo: float, hi: float, name: str):
    bad = (x < lo) | (x > hi) | ~np.isfinite(x)
    if np.any(bad):
        raise DomainError(
            f"{name}={x[bad][0]!r} outside the spline domain [{lo}, {hi}]"
        )


def invert_parameter(x, coords, knots: KnotVector, max_iter: int = 200):
    """Parameter ``u`` with ``sum_j V_j(u) coords_j == x``, by bisection.

    Works elementwise on arrays and returns a float for scalar input.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.size != knots.n_points:
        raise DimensionError(f"{coords.size} coordinates for {knots.n_points} control points")
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    _check_domain(xs, coords[0], coords[-1], "coordinate")
    lo = np.zeros_like(xs)
    hi = np.ones_like(xs)
    lo[xs == coords[-1]] = 1.0
    hi[xs == coords[0]] = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        below = basis_matrix(mid, knots) @ coords < xs
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
    # pick whichever bracket end maps closer to the target
    u = np.where(
        np.abs(basis_matrix(lo, knots) @ coords - xs) <= np.abs(basis_matrix(hi, knots) @ coords - xs),
        lo, hi)
    return float(u[0]) if scalar else u


@lru_cache(maxsize=64)
def _axis_table(points: tuple, coords: tuple, knots: KnotVector) -> np.ndarray:
    u = invert_parameter(np.asarray(points), np.asarray(coords), knots)
    table = basis_matrix(u, knots)
    table.setflags(write=False)
    return table


def axis_basis(points, coords, knots: KnotVector, cache: bool = False) -> np.ndarray:
    """Basis values at physical positions along one axis, shape ``(P, N)``.

    With ``cache`` the table is memoised, which pays off when the same dense
    rendering grid is evaluated over and over.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if cache:
        return _axis_table(tuple(points.tolist()), tuple(np.asarray(coords, float).tolist()), knots)
    return basis_matrix(invert_parameter(points, coords, knots), knots)


@dataclass(frozen=True)
class SplineSurface:
    control: np.ndarray
    knots_u: KnotVector
    knots_w: KnotVector
    x_coords: np.ndarray
    y_coords: np.ndarray

    def __post_init__(self):
        control = np.array(self.control, dtype=float, copy=True)
        x = np.array(self.x_coords, dtype=float, copy=True)
        y = np.array(self.y_coords, dtype=float, copy=True)
        if control.shape != (self.knots_u.n_points, self.knots_w.n_points):
            raise DimensionError(
                f"control net {control.shape} does not match knots "
                f"({self.knots_u.n_points}, {self.knots_w.n_points})"
            )
        if x.size != control.shape[0] or y.size != control.shape[1]:
            raise DimensionError("coordinate lengths must match the control net")
        if not np.all(np.isfinite(control)):
            raise NumericalError("control net has non-finite values")
        for arr in (control, x, y):
            arr.setflags(write=False)
        object.__setattr__(self, "control", control)
        object.__setattr__(self, "x_coords", x)
        object.__setattr__(self, "y_coords", y)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x_coords[0], self.x_coords[-1], self.y_coords[0], self.y_coords[-1])

    def parameters(self, x, y):
        return (invert_parameter(x, self.x_coords, self.knots_u),
                invert_parameter(y, self.y_coords, self.knots_w))

    def at_parameters(self, u, w) -> np.ndarray:
        bu = basis_matrix(u, self.knots_u)
        bw = basis_matrix(w, self.knots_w)
        return np.einsum("pi,ij,pj->p", bu, self.control, bw)

    def __call__(self, x, y):
        scalar = np.ndim(x) == 0 and np.ndim(y) == 0
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        u, w = self.parameters(x.ravel(), y.ravel())
        out = self.at_parameters(u, w).reshape(x.shape)
        return float(out) if scalar else out

    def evaluate_grid(self, xs, ys, cache: bool = False) -> np.ndarray:
        """Surface on the tensor grid ``xs x ys``, shape ``(len(xs), len(ys))``."""
        bu = axis_basis(xs, self.x_coords, self.knots_u, cache)
        bw = axis_basis(ys, self.y_coords, self.knots_w, cache)
        return bu @ self.control @ bw.T


def eval_surface(s: SplineSurface, x, y):
    return s(x, y)


@dataclass(frozen=True)
class SplineSurfaceSet:
    surfaces: tuple[SplineSurface, ...]

    def __post_init__(self):
        surfaces = tuple(self.surfaces)
        if not surfaces:
            raise DimensionError("a surface set needs at least one surface")
        ref = surfaces[0]
        for s in surfaces[1:]:
            if (s.knots_u != ref.knots_u or s.knots_w != ref.knots_w
                    or not np.array_equal(s.x_coords, ref.x_coords)
                    or not np.array_equal(s.y_coords, ref.y_coords)):
                raise DimensionError("all surfaces must share knots and coordinates")
        object.__setattr__(self, "surfaces", surfaces)

    def __len__(self):
        return len(self.surfaces)

    def __getitem__(self, i) -> SplineSurface:
        return self.surfaces[i]

    @property
    def order(self) -> int:
        return len(self.surfaces)

    @property
    def bounds(self):
        return self.surfaces[0].bounds

    def controls(self) -> np.ndarray:
        """Stacked control nets, shape ``(n, n1, n2)``."""
        return np.stack([s.control for s in self.surfaces])

    def values(self, x, y) -> np.ndarray:
        """All surfaces at points ``(x, y)``, shape ``(n,) + broadcast shape``."""
        ref = self.surfaces[0]
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        u, w = ref.parameters(x.ravel(), y.ravel())
        bu = basis_matrix(u, ref.knots_u)
        bw = basis_matrix(w, ref.knots_w)
        out = np.einsum("pi,kij,pj->kp", bu, self.controls(), bw)
        return out.reshape((self.order,) + x.shape)

    def grid_values(self, xs, ys, cache: bool = True) -> np.ndarray:
        """All surfaces on the tensor grid, shape ``(n, len(xs), len(ys))``."""
        ref = self.surfaces[0]
        bu = axis_basis(xs, ref.x_coords, ref.knots_u, cache)
        bw = axis_basis(ys, ref.y_coords, ref.knots_w, cache)
        return np.einsum("pi,kij,qj->kpq", bu, self.controls(), bw)


def build_continuous_sbfs(basis_full: SbfBasis, grid: Grid2D) -> SplineSurfaceSet:
    """One clamped cubic surface per retained mode, control net = reshaped mode."""
    if basis_full.n_sensors != grid.size:
        raise DimensionError(
            f"basis has {basis_full.n_sensors} rows, grid has {grid.size} sensors"
        )
    ku, kw = knot_vector(grid.n1), knot_vector(grid.n2)
    return SplineSurfaceSet(tuple(
        SplineSurface(reshape_sbf_column(basis_full.phi[:, i], grid), ku, kw,
                      grid.x_coords, grid.y_coords)
        for i in range(basis_full.order)
    ))


def fit_residual(surfaces: SplineSurfaceSet, basis_full: SbfBasis, grid: Grid2D) -> np.ndarray:
    """Per-mode sum of squared misfits between surfaces and the discrete modes
    at the sensor locations."""
    vals = surfaces.grid_values(grid.x_coords, grid.y_coords, cache=False)
    target = basis_full.phi.T.reshape(-1, grid.n1, grid.n2)
    return ((vals - target) ** 2).sum(axis=(1, 2))


def least_squares_projection(target, u_samples, w_samples, knots_u: KnotVector,
                             knots_w: KnotVector) -> np.ndarray:
    """Control net minimising the discrete L2 misfit to sampled values.

    Parameters
    ----------
    target : ndarray, shape (P, Q)
        Function values at the parameter grid ``u_samples x w_samples``.
    u_samples, w_samples : array_like
        Sample parameters in ``[0, 1]``.

    Returns
    -------
    ndarray, shape (knots_u.n_points, knots_w.n_points)
    """
    target = np.asarray(target, dtype=float)
    bu = basis_matrix(u_samples, knots_u)
    bw = basis_matrix(w_samples, knots_w)
    if target.shape != (bu.shape[0], bw.shape[0]):
        raise DimensionError(f"target shape {target.shape} != sample grid {(bu.shape[0], bw.shape[0])}")
    design = np.kron(bu, bw)
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise NumericalError("design matrix is rank deficient; refine the sample grid")
    coef, *_ = np.linalg.lstsq(design, target.ravel(), rcond=None)
    return coef.reshape(bu.shape[1], bw.shape[1])
