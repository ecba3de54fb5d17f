"""Dataset, model-bundle and heatmap files.

Numbers are written as decimal text with 17 significant digits, which
round-trips every float64 exactly.  Every file lands through a temporary file
in the target directory followed by ``os.replace``, so a failed write never
leaves a half-written output behind.

Dataset directory layout::

    manifest.json      schema version, file names, dt, t0, provenance
    snapshots.csv      header row = timestamps, one row per sensor (tag order)
    inputs.csv         header row = timestamps, one row per input channel
    layout.json        sensor grid coordinates
    truth/             optional fine-grid frames, one CSV per stored frame,
                       plus coords.json (cell centres and frame columns)
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .completion import CompletionOperator
from .errors import DimensionError, MissingFileError, ParseError, PersistenceError, SchemaError
from .field import Grid2D, SensorLayout, SnapshotMatrix, build_mapping_matrix
from .separation import SbfBasis
from .spline import KnotVector, SplineSurface, SplineSurfaceSet
from .synthesis import PipelineConfig, SpatioTemporalModel
from .temporal import LstmModel, Standardizer, TrainConfig

__all__ = [
    "DATASET_SCHEMA",
    "MODEL_SCHEMA",
    "Dataset",
    "DatasetManifest",
    "save_dataset",
    "load_dataset",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
    "emit_heatmap",
    "write_csv_matrix",
    "read_csv_matrix",
    "write_json",
    "read_json",
    "atomic_write",
]

DATASET_SCHEMA = 1
MODEL_SCHEMA = 1
FLOAT_FMT = "%.17g"


# ----------------------------------------------------------------------------
# low-level helpers


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a sibling temporary file and rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _matrix_text(data: np.ndarray, header=None) -> str:
    buf = _io.StringIO()
    if header is not None:
        buf.write(",".join(_fmt(h) for h in header) + "\n")
    for row in np.atleast_2d(data):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv_matrix(path, data, header=None) -> Path:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionError(f"CSV matrix must be 2-D, got shape {data.shape}")
    return atomic_write(path, _matrix_text(data, header))


def read_csv_matrix(path, header: bool = False):
    """Read a numeric CSV; returns ``data`` or ``(header, data)``.

    Ragged rows and non-numeric cells raise :class:`ParseError` naming the
    offending row and column (1-based, counting the header line).
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"missing file {path}")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError(f"{path}: empty file")
    width = len(rows[0])
    values = []
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ParseError(f"{path}: row {i} has {len(row)} columns, expected {width}")
        try:
            values.append([float(cell) for cell in row])
        except ValueError:
            col = next(j for j, cell in enumerate(row, start=1) if not _is_float(cell))
            raise ParseError(f"{path}: row {i}, column {col}: not a number {row[col - 1]!r}") from None
    arr = np.array(values, dtype=float)
    if header:
        if arr.shape[0] < 2:
            raise ParseError(f"{path}: header present but no data rows")
        return arr[0], arr[1:]
    return arr


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _jsonable(obj):
    """Recursively convert arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _number(value, name: str) -> float:
    if isinstance(value, str) and value in ("inf", "-inf", "nan"):
        return float(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"field {name!r}: expected a number, got {value!r}")
    return float(value)


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(_jsonable(obj), indent=1, allow_nan=False) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"missing file {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc


# ----------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """Full-sensing snapshots, aligned inputs and optional fine-grid truth.

    ``truth[k]`` is the fine field at snapshot column ``truth_index[k]`` on
    the cell centres ``truth_x x truth_y``.
    """

    snapshots: SnapshotMatrix
    inputs: np.ndarray
    grid: Grid2D
    truth: np.ndarray | None = None
    truth_index: np.ndarray | None = None
    truth_x: np.ndarray | None = None
    truth_y: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if self.inputs.shape[1] != self.snapshots.n_snapshots:
            raise DimensionError(
                f"inputs have {self.inputs.shape[1]} columns, snapshots {self.snapshots.n_snapshots}"
            )
        if self.snapshots.n_sensors != self.grid.size:
            raise DimensionError(
                f"snapshots have {self.snapshots.n_sensors} rows, grid has {self.grid.size} sensors"
            )
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
            self.truth_index = np.asarray(self.truth_index, dtype=int)
            if self.truth.shape[0] != self.truth_index.size:
                raise DimensionError("one truth frame per truth index required")

    @property
    def has_truth(self) -> bool:
        return self.truth is not None and self.truth.shape[0] > 0

    @classmethod
    def from_simulation(cls, result, truth_stride: int | None = 1) -> "Dataset":
        """Wrap a :class:`~sparsefield.simulator.SimulationResult`.

        ``truth_stride`` keeps every k-th fine frame; ``None`` drops them.
        """
        cfg = result.config
        prov = {"source": "simulator", "config": cfg.to_dict()}
        if truth_stride is None or result.truth is None:
            return cls(result.snapshots, result.inputs, result.grid, provenance=prov)
        stride = int(truth_stride)
        # keep frames whose timestamps are whole multiples of the stride
        idx = np.arange(stride - 1, result.truth.shape[0], stride)
        return cls(result.snapshots, result.inputs, result.grid, result.truth[idx], idx,
                   cfg.x_cells(), cfg.y_cells(), prov)


@dataclass(frozen=True)
class DatasetManifest:
    schema_version: int
    snapshots: str
    inputs: str
    layout: str
    truth: str | None
    dt: float
    t0: float
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "snapshots": self.snapshots,
            "inputs": self.inputs,
            "layout": self.layout,
            "truth": self.truth,
            "dt": self.dt,
            "t0": self.t0,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        version = d.get("schema_version")
        if version != DATASET_SCHEMA:
            raise SchemaError(
                f"unsupported dataset schema version {version!r} (expected {DATASET_SCHEMA})"
            )
        try:
            return cls(int(version), str(d["snapshots"]), str(d["inputs"]), str(d["layout"]),
                       None if d.get("truth") is None else str(d["truth"]),
                       _number(d["dt"], "dt"), _number(d["t0"], "t0"), dict(d.get("provenance", {})))
        except KeyError as exc:
            raise SchemaError(f"manifest lacks field {exc.args[0]!r}") from None


def save_dataset(dataset: Dataset, path) -> DatasetManifest:
    """Write ``dataset`` into directory ``path`` (created if needed)."""
    root = Path(path)
    snaps = dataset.snapshots
    times = snaps.times
    write_csv_matrix(root / "snapshots.csv", snaps.data, times)
    write_csv_matrix(root / "inputs.csv", dataset.inputs, times)
    write_json(root / "layout.json", {"grid": dataset.grid.to_dict()})
    truth_dir = None
    if dataset.has_truth:
        truth_dir = "truth"
        for k, frame in zip(dataset.truth_index, dataset.truth):
            write_csv_matrix(root / truth_dir / f"frame_{int(k):06d}.csv", frame)
        write_json(root / truth_dir / "coords.json", {
            "x": dataset.truth_x, "y": dataset.truth_y, "index": dataset.truth_index,
        })
    manifest = DatasetManifest(DATASET_SCHEMA, "snapshots.csv", "inputs.csv", "layout.json",
                               truth_dir, snaps.dt, snaps.t0, dataset.provenance)
    # manifest last: a directory without one is recognisably incomplete
    write_json(root / "manifest.json", manifest.to_dict())
    return manifest


def load_dataset(path) -> tuple[DatasetManifest, Dataset]:
    root = Path(path)
    manifest = DatasetManifest.from_dict(read_json(root / "manifest.json"))
    t_head, data = read_csv_matrix(root / manifest.snapshots, header=True)
    u_head, inputs = read_csv_matrix(root / manifest.inputs, header=True)
    if not np.array_equal(t_head, u_head):
        raise ParseError("snapshot and input timestamps differ")
    layout = read_json(root / manifest.layout)
    try:
        grid = Grid2D.from_dict(layout["grid"])
    except KeyError as exc:
        raise SchemaError(f"layout lacks field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"layout: {exc}") from exc
    snaps = SnapshotMatrix(data, manifest.dt, manifest.t0)
    if not np.allclose(snaps.times, t_head, rtol=0, atol=1e-9 * max(1.0, abs(t_head).max())):
        raise ParseError("snapshot header timestamps disagree with dt/t0 in the manifest")
    truth = index = tx = ty = None
    if manifest.truth is not None:
        coords = read_json(root / manifest.truth / "coords.json")
        try:
            index = np.asarray(coords["index"], dtype=int)
            tx = np.asarray(coords["x"], dtype=float)
            ty = np.asarray(coords["y"], dtype=float)
        except KeyError as exc:
            raise SchemaError(f"truth coords lack field {exc.args[0]!r}") from None
        frames = [read_csv_matrix(root / manifest.truth / f"frame_{int(k):06d}.csv") for k in index]
        truth = np.stack(frames) if frames else np.empty((0, tx.size, ty.size))
        if truth.shape[1:] != (tx.size, ty.size):
            raise ParseError(f"truth frames have shape {truth.shape[1:]}, coords ({tx.size}, {ty.size})")
    try:
        ds = Dataset(snaps, inputs, grid, truth, index, tx, ty, manifest.provenance)
    except DimensionError as exc:
        raise ParseError(f"inconsistent dataset files: {exc}") from exc
    return manifest, ds


# ----------------------------------------------------------------------------
# model bundles


def _basis_dict(b: SbfBasis) -> dict:
    return {"phi": b.phi, "energies": b.energies}


def _array(d: dict, key: str, shape=None, ndim=None) -> np.ndarray:
    try:
        raw = d[key]
    except KeyError:
        raise SchemaError(f"model file lacks field {key!r}") from None
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"field {key!r} is not a rectangular numeric array") from exc
    if ndim is not None and arr.ndim != ndim:
        raise SchemaError(f"field {key!r} has {arr.ndim} dimensions, expected {ndim}")
    if shape is not None and arr.shape != tuple(shape):
        raise SchemaError(f"field {key!r} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def model_to_dict(model: SpatioTemporalModel) -> dict:
    lstm = model.temporal
    ref = model.surfaces[0]
    return {
        "format": "sparsefield-model",
        "schema_version": MODEL_SCHEMA,
        "grid": model.grid.to_dict(),
        "s_tag": list(model.layout.s_tag),
        "basis_sparse": _basis_dict(model.basis_sparse),
        "basis_full": _basis_dict(model.basis_full),
        "completion": {"recovery": model.completion.recovery,
                       "condition_number": model.completion.condition_number},
        "surfaces": {
            "knots_u": list(ref.knots_u.knots),
            "knots_w": list(ref.knots_w.knots),
            "controls": model.surfaces.controls(),
        },
        "temporal": {
            "n_coeffs": lstm.n_coeffs,
            "n_inputs": lstm.n_inputs,
            "hidden_dim": lstm.hidden_dim,
            "input_dim": lstm.input_dim,
            "params": dict(lstm.params),
            "in_scaler": lstm.in_scaler.to_dict(),
            "out_scaler": lstm.out_scaler.to_dict(),
            "config": lstm.config.to_dict(),
            "report": lstm.report,
        },
        "pipeline": model.config.to_dict(),
        "report": model.report,
    }


def model_from_dict(d: dict) -> SpatioTemporalModel:
    version = d.get("schema_version")
    if d.get("format") != "sparsefield-model":
        raise SchemaError("not a sparsefield model bundle")
    if not isinstance(version, int) or version != MODEL_SCHEMA:
        raise SchemaError(f"unsupported model schema version {version!r} (expected {MODEL_SCHEMA})")
    try:
        grid = Grid2D.from_dict(d["grid"])
        layout = SensorLayout(grid, tuple(int(t) for t in d["s_tag"]))
        bs_d, bf_d = d["basis_sparse"], d["basis_full"]
        comp_d, surf_d, tmp_d = d["completion"], d["surfaces"], d["temporal"]
    except KeyError as exc:
        raise SchemaError(f"model file lacks field {exc.args[0]!r}") from None
    n_s, n_f = layout.n_sparse, grid.size
    phi_s = _array(bs_d, "phi", ndim=2)
    phi_f = _array(bf_d, "phi", ndim=2)
    if phi_s.shape[0] != n_s:
        raise SchemaError(f"field 'basis_sparse.phi' has {phi_s.shape[0]} rows, expected {n_s}")
    if phi_f.shape[0] != n_f:
        raise SchemaError(f"field 'basis_full.phi' has {phi_f.shape[0]} rows, expected {n_f}")
    basis_s = SbfBasis(phi_s, _array(bs_d, "energies", ndim=1))
    basis_f = SbfBasis(phi_f, _array(bf_d, "energies", ndim=1))
    recovery = _array(comp_d, "recovery", shape=(basis_f.order, basis_s.order))
    comp = CompletionOperator(recovery, basis_s, basis_f, build_mapping_matrix(layout),
                              _number(comp_d.get("condition_number", "nan"), "condition_number"))
    ku = KnotVector(tuple(_array(surf_d, "knots_u", ndim=1).tolist()))
    kw = KnotVector(tuple(_array(surf_d, "knots_w", ndim=1).tolist()))
    controls = _array(surf_d, "controls", shape=(basis_f.order, grid.n1, grid.n2))
    surfaces = SplineSurfaceSet(tuple(SplineSurface(c, ku, kw, grid.x_coords, grid.y_coords)
                                      for c in controls))

    try:
        n_coeffs, n_inputs = int(tmp_d["n_coeffs"]), int(tmp_d["n_inputs"])
        hdim, dim = int(tmp_d["hidden_dim"]), int(tmp_d["input_dim"])
        params_d = tmp_d["params"]
        cfg = TrainConfig(**tmp_d["config"])
    except KeyError as exc:
        raise SchemaError(f"model file lacks field 'temporal.{exc.args[0]}'") from None
    except TypeError as exc:
        raise SchemaError(f"temporal config: {exc}") from exc
    shapes = {"W": (4 * hdim, dim), "U": (4 * hdim, hdim), "b": (4 * hdim,),
              "V": (n_coeffs, hdim), "c": (n_coeffs,)}
    params = {k: _array(params_d, k, shape=s) for k, s in shapes.items()}
    try:
        in_sc = Standardizer.from_dict(tmp_d["in_scaler"])
        out_sc = Standardizer.from_dict(tmp_d["out_scaler"])
    except KeyError as exc:
        raise SchemaError(f"scaler lacks field {exc.args[0]!r}") from None
    if in_sc.mean.shape != (dim,) or in_sc.std.shape != (dim,):
        raise SchemaError("field 'temporal.in_scaler' does not match the input width")
    if out_sc.mean.shape != (n_coeffs,) or out_sc.std.shape != (n_coeffs,):
        raise SchemaError("field 'temporal.out_scaler' does not match the coefficient count")
    lstm = LstmModel(params, n_coeffs, n_inputs, in_sc, out_sc, cfg, dict(tmp_d.get("report", {})))
    pipeline = PipelineConfig.from_dict(d.get("pipeline", {}))
    try:
        return SpatioTemporalModel(layout, basis_s, basis_f, comp, surfaces, lstm, pipeline,
                                   dict(d.get("report", {})))
    except (DimensionError, ValueError) as exc:
        raise SchemaError(f"inconsistent model bundle: {exc}") from exc


def save_model(model: SpatioTemporalModel, path) -> Path:
    return write_json(path, model_to_dict(model))


def load_model(path) -> SpatioTemporalModel:
    return model_from_dict(read_json(path))


# ----------------------------------------------------------------------------
# heatmaps


def emit_heatmap(values, path) -> tuple[Path, Path]:
    """Write a value grid as ``<path>.csv`` and an ASCII PGM ``<path>.pgm``.

    Grey levels map the minimum to 0 and the maximum to 255 (rounded to
    nearest); a constant grid maps to all zeros.  The PGM comment line
    records the value range.
    """
    grid = np.asarray(values, dtype=float)
    if grid.ndim != 2 or grid.size == 0:
        raise DimensionError(f"heatmap needs a non-empty 2-D grid, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise DimensionError("heatmap values must be finite")
    base = Path(path)
    if base.suffix in (".csv", ".pgm"):
        base = base.with_suffix("")
    lo, hi = float(grid.min()), float(grid.max())
    if hi > lo:
        pix = np.rint((grid - lo) / (hi - lo) * 255.0).astype(int)
    else:
        pix = np.zeros(grid.shape, dtype=int)
    rows, cols = grid.shape
    lines = ["P2", f"# min={_fmt(lo)} max={_fmt(hi)}", f"{cols} {rows}", "255"]
    lines += [" ".join(str(p) for p in row) for row in pix]
    csv_path = write_csv_matrix(base.with_suffix(".csv"), grid)
    pgm_path = atomic_write(base.with_suffix(".pgm"), "\n".join(lines) + "\n")
    return csv_path, pgm_path
