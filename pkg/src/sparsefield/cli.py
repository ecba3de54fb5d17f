"""Command-line entry point.

Subcommands: ``simulate``, ``train``, ``evaluate``, ``sweep-count`` and
``sweep-scheme``.  Any option can also be supplied through an environment
variable named ``SPARSEFIELD_<OPTION>`` (upper case, dashes as underscores);
explicit flags win.  Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 file error.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import (ConfigError, LayoutError, NumericalError, PersistenceError, SparseFieldError,
                     StageError)
from .io import (Dataset, atomic_write, emit_heatmap, load_dataset, load_model, save_dataset,
                 save_model, write_json)
from .simulator import HeatSimConfig, simulate
from .synthesis import PipelineConfig, field_values, stae, stream
from .temporal import TrainConfig

__all__ = ["main", "build_parser", "parse_tags"]

log = logging.getLogger("sparsefield")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
ENV_PREFIX = "SPARSEFIELD_"


def parse_tags(text: str) -> tuple[int, ...]:
    """``"3,11"`` -> ``(3, 11)``; duplicates are rejected up front."""
    try:
        tags = tuple(int(t) for t in str(text).replace(";", ",").split(",") if t.strip())
    except ValueError:
        raise LayoutError(f"sensor list must be comma-separated integers, got {text!r}") from None
    if not tags:
        raise LayoutError("sensor list is empty")
    if len(set(tags)) != len(tags):
        raise LayoutError(f"duplicate sensor tags in {list(tags)}")
    return tags


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(f"evaluation grid must look like 48x64, got {text!r}") from None
    return nx, ny


def _env(dest: str, default):
    return os.environ.get(ENV_PREFIX + dest.upper(), default)


def _add(p: argparse.ArgumentParser, flag: str, **kw):
    dest = kw.get("dest", flag.lstrip("-").replace("-", "_"))
    if kw.get("action") == "store_true":
        raw = _env(dest, None)
        kw["default"] = raw is not None and raw.lower() in ("1", "true", "yes", "on")
    else:
        kw["default"] = _env(dest, kw.get("default"))
    p.add_argument(flag, **kw)


def _pipeline_args(p):
    _add(p, "--threshold", type=float, default=0.99, help="energy ratio for model order")
    _add(p, "--energy-measure", choices=("singular", "squared"), default="singular",
         help="per-mode energy used by the order rule")
    _add(p, "--epochs", type=int, default=500)
    _add(p, "--hidden", type=int, default=32, help="LSTM hidden units")
    _add(p, "--lr", type=float, default=1e-3)
    _add(p, "--seed", type=int, default=0)
    _add(p, "--train-fraction", type=float, default=0.5)


def _eval_args(p):
    _add(p, "--mode", choices=("teacher", "rollout"), default="teacher")
    _add(p, "--grid", default="48x64", help="evaluation grid NXxNY over the sensor rectangle")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsefield", description=__doc__.split("\n\n")[0])
    _add(parser, "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add(p, "--out", required=False, help="dataset directory")
    _add(p, "--seed", type=int, default=0)
    _add(p, "--sim-dt", type=float, default=None, help="integration step (s); auto if omitted")
    _add(p, "--duration", type=float, default=2000.0)
    _add(p, "--noise", type=float, default=0.05, help="sensor noise std (degC)")
    _add(p, "--truth-stride", type=int, default=10,
         help="store every k-th fine-grid frame (0 stores none)")

    p = sub.add_parser("train", help="offline fit on the training split")
    _add(p, "--dataset")
    _add(p, "--out")
    _add(p, "--sensors", help='online sensor tags, e.g. "3,11"')
    _pipeline_args(p)

    p = sub.add_parser("evaluate", help="stream the record and score the predictions")
    _add(p, "--dataset")
    _add(p, "--out")
    _add(p, "--model", help="model.json from train; trains on the fly when omitted")
    _add(p, "--sensors")
    _add(p, "--timestamps", help="comma-separated times (s) for heatmaps")
    _add(p, "--baseline", choices=("full-kl",), default=None,
         help="run the conventional full-sensing pipeline instead")
    _add(p, "--perfect-model", action="store_true",
         help="also report errors with exact coefficients in place of predictions")
    _pipeline_args(p)
    _eval_args(p)

    for name, text in (("sweep-count", "RMSE versus number of online sensors"),
                       ("sweep-scheme", "two-sensor schemes around an anchor sensor")):
        p = sub.add_parser(name, help=text)
        _add(p, "--dataset")
        _add(p, "--out")
        _add(p, "--reuse-temporal", action="store_true",
             help="train one temporal model and share it across schemes")
        if name == "sweep-count":
            _add(p, "--max-count", type=int, default=None)
        else:
            _add(p, "--anchor", type=int, default=None,
                 help="anchor tag (default: highest training variance)")
        _pipeline_args(p)
        _eval_args(p)
    return parser


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) in (None, "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigError(f"missing required option(s): {flags}")


def _pipeline(args) -> PipelineConfig:
    tc = TrainConfig(epochs=args.epochs, hidden_dim=args.hidden, learning_rate=args.lr,
                     seed=args.seed, residual=True)
    return PipelineConfig(threshold=args.threshold, energy_measure=args.energy_measure, train=tc)


def _rows_csv(rows: list[dict]) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("%.17g" % v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def cmd_simulate(args) -> int:
    _require(args, "out")
    cfg = HeatSimConfig(seed=args.seed, sim_dt=args.sim_dt, duration=args.duration,
                        noise_std=args.noise)
    stride = args.truth_stride if args.truth_stride and args.truth_stride > 0 else None
    result = simulate(cfg, keep_truth=stride is not None)
    manifest = save_dataset(Dataset.from_simulation(result, stride), args.out)
    log.info("wrote %s (%d sensors x %d snapshots)", args.out,
             result.snapshots.n_sensors, result.snapshots.n_snapshots)
    print(json.dumps({"dataset": str(args.out), "sensors": result.snapshots.n_sensors,
                      "snapshots": result.snapshots.n_snapshots,
                      "truth_frames": 0 if manifest.truth is None else
                      int(np.ceil(result.snapshots.n_snapshots / stride))}))
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args, "dataset", "out", "sensors")
    tags = parse_tags(args.sensors)
    config = _pipeline(args)
    _, ds = load_dataset(args.dataset)
    model = ex.fit_split(ds, tags, config, args.train_fraction)
    out = Path(args.out)
    save_model(model, out / "model.json")
    report = {"s_tag": list(tags), "pipeline": config.to_dict(), **model.report}
    write_json(out / "report.json", report)
    print(json.dumps({k: report[k] for k in ("n_f", "n_s", "condition_number")}, default=str))
    return EXIT_OK


def _timestamp_columns(ds: Dataset, text: str) -> list[int]:
    times = ds.snapshots.times
    lo, hi = float(times[1]), float(times[-1])
    cols = []
    for t in _parse_floats(text):
        k = int(round((t - ds.snapshots.t0) / ds.snapshots.dt))
        if not 1 <= k < times.size or abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"timestamp {t:g} is not a predicted snapshot; valid range "
                              f"[{lo:g}, {hi:g}] in steps of {ds.snapshots.dt:g}")
        cols.append(k)
    return cols


def cmd_evaluate(args) -> int:
    _require(args, "dataset", "out")
    nx, ny = _parse_grid(args.grid)
    config = _pipeline(args)
    _, ds = load_dataset(args.dataset)
    cols = _timestamp_columns(ds, args.timestamps) if args.timestamps else []
    if args.baseline == "full-kl":
        model = ex.fit_split(ds, tuple(range(1, ds.grid.size + 1)), config, args.train_fraction)
    elif args.model:
        model = load_model(args.model)
    else:
        _require(args, "sensors")
        model = ex.fit_split(ds, parse_tags(args.sensors), config, args.train_fraction)
    if model.grid != ds.grid:
        raise ConfigError("model and dataset use different sensor grids")

    ctx = ex.evaluation_context(ds, nx, ny)
    ev = ex.evaluate(model, ds, ctx, args.mode, args.train_fraction)
    summary = ev.summary()
    summary["baseline"] = args.baseline or "two-stage"
    if args.perfect_model:
        summary["perfect_model"] = ex.perfect_model(model, ds, ctx, args.train_fraction)

    out = Path(args.out)
    atomic_write(out / "snae.csv", _rows_csv(
        [{"t": float(t), "snae": float(v)} for t, v in zip(ev.times, ev.snae)]))
    if cols:
        result = stream(model, ds.snapshots.data[model.layout.indices], ds.inputs, args.mode,
                        rollout_start=ex.split_index(ds.snapshots.n_snapshots, args.train_fraction))
        pred = field_values(model, result.coeffs[:, cols], ctx.xs, ctx.ys)
        lookup = {int(c): i for i, c in enumerate(ctx.columns)}
        for k, frame in zip(cols, pred):
            stamp = "%g" % ds.snapshots.times[k]
            emit_heatmap(frame, out / "heatmaps" / f"predicted_t{stamp}")
            if k in lookup:
                truth = ctx.truth[lookup[k]]
                emit_heatmap(stae(frame, truth), out / "heatmaps" / f"stae_t{stamp}")
    write_json(out / "summary.json", summary)
    print(json.dumps({k: summary[k] for k in ("train_rmse", "test_rmse", "n_s", "n_f")}))
    return EXIT_OK


def _sweep_out(out: Path, name: str, rows, extra: dict | None = None):
    atomic_write(out / f"{name}.csv", _rows_csv([r.as_dict() for r in rows]))
    if extra is not None:
        write_json(out / f"{name}.json", extra)


def cmd_sweep_count(args) -> int:
    _require(args, "dataset", "out")
    nx, ny = _parse_grid(args.grid)
    _, ds = load_dataset(args.dataset)
    top = ds.grid.size if args.max_count is None else min(args.max_count, ds.grid.size)
    ctx = ex.evaluation_context(ds, nx, ny)
    rows = ex.sweep_count(ds, _pipeline(args), ctx, range(1, top + 1), args.mode,
                          args.train_fraction, args.reuse_temporal)
    _sweep_out(Path(args.out), "sweep_count", rows)
    print(json.dumps([{"sensors": len(r.s_tag), "test_rmse": r.test_rmse} for r in rows]))
    return EXIT_OK


def cmd_sweep_scheme(args) -> int:
    _require(args, "dataset", "out")
    nx, ny = _parse_grid(args.grid)
    _, ds = load_dataset(args.dataset)
    ctx = ex.evaluation_context(ds, nx, ny)
    rows, winner = ex.sweep_scheme(ds, _pipeline(args), ctx, args.anchor, None, args.mode,
                                   args.train_fraction, args.reuse_temporal)
    flagged = [list(r.s_tag) for r in rows if r.ill_conditioned]
    _sweep_out(Path(args.out), "sweep_scheme", rows, {
        "anchor": rows[0].s_tag[0],
        "winner": winner.as_dict(),
        "ill_conditioned": flagged,
        "condition_threshold": ex.ILL_CONDITIONED,
    })
    print(json.dumps({"winner": list(winner.s_tag), "test_rmse": winner.test_rmse}))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep-count": cmd_sweep_count,
    "sweep-scheme": cmd_sweep_scheme,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code(exc.error)
    if isinstance(exc, (PersistenceError, OSError)):
        return EXIT_IO
    if isinstance(exc, (NumericalError, ArithmeticError)):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (SparseFieldError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
