"""Reproduce the synthetic result tables.

    python scripts/run_experiments.py [--config scripts/experiment.toml] [--out results] [--workers N]

Writes replicas.csv, aggregate.json and tables.txt to the output directory and
prints the tables.
"""

import argparse
import logging
import os
from pathlib import Path

from leadfollow.cli import load_config
from leadfollow.evaluation import ExperimentConfig, run_experiment


def main() -> None:
    here = Path(__file__).parent
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(here / "experiment.toml"))
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=int(os.environ.get("LEADFOLLOW_WORKERS", "1")))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config)
    d = dict(cfg.get("experiment", {}))
    d["pipeline"] = dict(cfg.get("pipeline", {"omega": 40}))
    if "scenario" in cfg:
        d["scenario"] = dict(cfg["scenario"])
    report = run_experiment(ExperimentConfig.from_dict(d), progress=logging.info, workers=args.workers)
    report.write(args.out)
    print(report.tables(), end="")


if __name__ == "__main__":
    main()
