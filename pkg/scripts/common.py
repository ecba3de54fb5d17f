"""Shared plumbing for the experiment scripts: dataset loading and output."""

import argparse
import json
import logging
from pathlib import Path

from sparsefield.experiments import evaluation_context
from sparsefield.io import Dataset, load_dataset
from sparsefield.simulator import HeatSimConfig, simulate
from sparsefield.synthesis import PipelineConfig
from sparsefield.temporal import TrainConfig


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--dataset", help="dataset directory; simulates the default one if omitted")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    return p


def setup(args):
    """Dataset, evaluation context and pipeline config from parsed args."""
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.dataset:
        _, ds = load_dataset(args.dataset)
    else:
        ds = Dataset.from_simulation(simulate(HeatSimConfig()), truth_stride=1)
    cfg = PipelineConfig(train=TrainConfig(epochs=args.epochs, seed=args.seed, residual=True))
    return ds, evaluation_context(ds), cfg


def dump(args, name: str, payload) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(json.dumps(payload, indent=1, default=float) + "\n")
    print(json.dumps(payload, indent=1, default=float))
    return path
