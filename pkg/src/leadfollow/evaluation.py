"""Losses against ground truth and batch experiments over simulated replicas."""
from __future__ import annotations

import csv
import json
import logging
import math
import multiprocessing
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .clustering import ClusterSet, cluster_f1
from .core import ensure_dir
from .dynamics import DynamicsDiagram
from .factions import format_set
from .pipeline import PipelineConfig, run_pipeline
from .simgen import GroundTruth, ScenarioSpec, replica_seeds, simulate
from .stattests import significance_protocol

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagramLoss:
    l1: float
    fp: float
    fn: float
    n_truth: int

    @property
    def total(self) -> float:
        return (self.l1 + self.fp + self.fn) / self.n_truth


def _block_loss(pred_keys, A, true_keys, A_true) -> tuple[float, float, float]:
    """Shared-block L1, mass touching predicted-only keys, mass touching missed keys."""
    A = np.abs(np.asarray(A, dtype=float))
    A_true = np.asarray(A_true, dtype=float)
    pidx = {k: i for i, k in enumerate(pred_keys)}
    tidx = {k: i for i, k in enumerate(true_keys)}
    shared = [k for k in true_keys if k in pidx]
    ps = [pidx[k] for k in shared]
    ts = [tidx[k] for k in shared]
    l1 = float(np.abs(A[np.ix_(ps, ps)] - A_true[np.ix_(ts, ts)]).sum()) if shared else 0.0
    p_in = np.zeros(A.shape, dtype=bool)
    p_in[np.ix_(ps, ps)] = True
    t_in = np.zeros(A_true.shape, dtype=bool)
    t_in[np.ix_(ts, ts)] = True
    fp = float(A[~p_in].sum())
    fn = float(np.abs(A_true[~t_in]).sum())
    return l1, fp, fn


def diagram_loss(pred: DynamicsDiagram | None, truth_states, truth_A) -> DiagramLoss:
    """Loss of an inferred diagram; every entry in a row or column of an unmatched state counts."""
    truth_states = [frozenset(s) for s in truth_states]
    n_truth = len(truth_states) ** 2
    if pred is None:
        return DiagramLoss(0.0, 0.0, float(np.abs(truth_A).sum()), n_truth)
    l1, fp, fn = _block_loss(list(pred.states), pred.A_star, truth_states, truth_A)
    return DiagramLoss(l1, fp, fn, n_truth)


def cofaction_loss(A, A_true) -> float:
    """Mean absolute difference over unordered pairs."""
    A = np.asarray(A, dtype=float)
    A_true = np.asarray(A_true, dtype=float)
    if A.shape != A_true.shape:
        raise ValueError("matrices must share the node set")
    iu = np.triu_indices(A.shape[0], k=1)
    if iu[0].size == 0:
        return 0.0
    return float(np.abs(A[iu] - A_true[iu]).mean())


def leadfollow_loss(A, leaders, A_true, true_leaders) -> float:
    """Column-block loss over initiators; rows are the same follower universe."""
    A = np.abs(np.asarray(A, dtype=float).reshape(np.shape(A_true)[0], -1))
    A_true = np.abs(np.asarray(A_true, dtype=float))
    pidx = {v: k for k, v in enumerate(leaders)}
    shared = [v for v in true_leaders if v in pidx]
    ps = [pidx[v] for v in shared]
    ts = [list(true_leaders).index(v) for v in shared]
    l1 = float(np.abs(A[:, ps] - A_true[:, ts]).sum())
    fp = float(np.delete(A, ps, axis=1).sum())
    fn = float(np.delete(A_true, ts, axis=1).sum())
    return (l1 + fp + fn) / A_true.size


# --------------------------------------------------------------------------
# batch experiments


METRICS = (
    "diagram_loss",
    "cofaction_loss",
    "leadfollow_loss",
    "f1",
    "n_clusters",
    "Q",
    "best_sequence",
    "best_support",
    "n_states",
)


def evaluate_replica(ds, gt: GroundTruth, cfg: PipelineConfig) -> dict:
    res = run_pipeline(ds, cfg)
    dl = diagram_loss(res.diagram, gt.states, gt.A_star)
    best = res.sequences.best() if res.sequences is not None else None
    truth_clusters = ClusterSet.of(gt.clusters)
    return {
        "diagram_loss": dl.total,
        "cofaction_loss": cofaction_loss(res.supports.co, gt.cofaction),
        "leadfollow_loss": leadfollow_loss(res.leadfollow.weights, res.leadfollow.leaders, gt.leadfollow, gt.leaders),
        "f1": cluster_f1(res.clusters, truth_clusters).f1,
        "n_clusters": len(res.clusters),
        "Q": res.Q,
        "best_sequence": best.label() if best else "",
        "best_support": best.supp if best else 0.0,
        "n_states": res.diagram.n if res.diagram is not None else 0,
        "_result": res,
    }


def _agg(values) -> dict:
    vals = [float(v) for v in values]
    if not vals:
        return {"n": 0}
    sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return {
        "n": len(vals),
        "median": statistics.median(vals),
        "mean": statistics.fmean(vals),
        "sd": sd,
        "lo": statistics.fmean(vals) - 2 * sd,
        "hi": statistics.fmean(vals) + 2 * sd,
    }


@dataclass
class BatchReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    tests: list = field(default_factory=list)

    def groups(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out.setdefault((r["model"], r["dynamics"], r["backend"]), []).append(r)
        return out

    def aggregates(self) -> dict:
        agg = {}
        for key, rows in self.groups().items():
            name = "/".join(key)
            entry = {m: _agg(r[m] for r in rows) for m in METRICS if m not in ("best_sequence",)}
            seqs = [r["best_sequence"] for r in rows]
            entry["best_sequence_mode"] = max(sorted(set(seqs)), key=seqs.count) if seqs else ""
            agg[name] = entry
        return agg

    def to_json(self) -> dict:
        return {
            "aggregates": self.aggregates(),
            "excluded": len(self.failures),
            "failures": self.failures,
            "tests": self.tests,
        }

    def write(self, out_dir) -> None:
        out = ensure_dir(out_dir)
        cols = ["model", "dynamics", "backend", "replica", "seed", *METRICS]
        with open(out / "replicas.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in cols})
        (out / "aggregate.json").write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")
        (out / "tables.txt").write_text(self.tables(), encoding="utf-8")

    def tables(self) -> str:
        lines = []
        agg = self.aggregates()
        lines.append("Diagram loss (median)")
        for name, e in agg.items():
            lines.append(f"  {name:28s} {e['diagram_loss']['median']:.3f}")
        lines.append("Best sequence (mode, mean support)")
        for name, e in agg.items():
            lines.append(f"  {name:28s} {e['best_sequence_mode']}  {e['best_support']['mean']:.2f}")
        lines.append("Followership losses (mean +- 2 sd)")
        for name, e in agg.items():
            c, l = e["cofaction_loss"], e["leadfollow_loss"]
            lines.append(f"  {name:28s} co {c['mean']:.3f}+-{2 * c['sd']:.3f}  lf {l['mean']:.3f}+-{2 * l['sd']:.3f}")
        lines.append("Clustering (mean +- 2 sd)")
        for name, e in agg.items():
            f, q = e["f1"], e["Q"]
            lines.append(f"  {name:28s} F1 {f['mean']:.3f}+-{2 * f['sd']:.3f}  Q {q['mean']:.4f}+-{2 * q['sd']:.4f}")
        if self.tests:
            lines.append("Significance (rejection rates)")
            for t in self.tests:
                rates = " ".join(f"{k}={v:.2f}" for k, v in t["per_test_rates"].items())
                lines.append(f"  {t['name']:28s} {t['kind']:17s} joint={t['joint_rate']:.2f} {rates}")
        lines.append(f"Excluded replicas: {len(self.failures)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple = ("HM",)
    dynamics: tuple = ("type1", "type2")
    backends: tuple = ("following",)
    replicas: int = 20
    seed: int = 0
    pipeline: PipelineConfig = field(default_factory=lambda: PipelineConfig(omega=40))
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    ic_params: tuple = ((5, 0.5),)
    significance_reps: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        pipe = PipelineConfig(**d.pop("pipeline", {"omega": 40}))
        scen = d.pop("scenario", {})
        kw = {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(pipeline=pipe, scenario=ScenarioSpec(**scen) if scen else ScenarioSpec(), **kw)


def _scenarios(cfg: ExperimentConfig):
    for model in cfg.models:
        for dyn in cfg.dynamics:
            params = cfg.ic_params if model == "IC" else ((None, None),)
            for k, rho in params:
                yield replace(cfg.scenario, model=model, dynamics=dyn, k=k, rho=rho)


def _run_replica(task) -> tuple[list, list, list]:
    cfg, spec, r, s = task
    rows, failures, tests = [], [], []
    label = spec.model if spec.model != "IC" else f"IC(k={spec.k},rho={spec.rho})"
    try:
        ds, gt = simulate(replace(spec, seed=s))
    except Exception as exc:  # noqa: BLE001 - reported, replica excluded
        failures.append({"model": label, "dynamics": spec.dynamics, "replica": r, "error": repr(exc)})
        return rows, failures, tests
    for backend in cfg.backends:
        pcfg = replace(cfg.pipeline, backend=backend)
        try:
            m = evaluate_replica(ds, gt, pcfg)
        except Exception as exc:  # noqa: BLE001
            log.warning("replica %d failed: %r", r, exc)
            failures.append({"model": label, "dynamics": spec.dynamics, "backend": backend, "replica": r, "error": repr(exc)})
            continue
        res = m.pop("_result")
        rows.append({"model": label, "dynamics": spec.dynamics, "backend": backend, "replica": r, "seed": s, **m})
        if cfg.significance_reps and backend == "following" and r == 0 and res.diagram is not None:
            for kind in ("edge-weight", "sequence-support"):
                rep = significance_protocol(
                    kind, res.leaders, res.diagram, res.encoded, R=cfg.significance_reps,
                    alpha=pcfg.alpha, seed=s, phi=pcfg.phi,
                )
                tests.append({"name": f"{label}/{spec.dynamics}", **rep.to_json()})
    return rows, failures, tests


def run_experiment(cfg: ExperimentConfig, progress=None, workers: int = 1) -> BatchReport:
    """simulate -> infer -> evaluate for every grid cell and replica.

    Replicas are independent; with ``workers > 1`` they run in a process pool
    and are collected in task order, so the report does not depend on scheduling.
    """
    tasks = [(cfg, spec, r, s) for spec in _scenarios(cfg) for r, s in enumerate(replica_seeds(cfg.seed, cfg.replicas))]
    report = BatchReport()
    if workers > 1 and len(tasks) > 1:
        # spawn, not fork: forking after numba's OpenMP layer starts is unsafe
        pool = ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn"))
        results = pool.map(_run_replica, tasks)
    else:
        pool = None
        results = map(_run_replica, tasks)
    try:
        for (_, spec, r, _), (rows, failures, tests) in zip(tasks, results):
            report.rows += rows
            report.failures += failures
            report.tests += tests
            if progress:
                for row in rows:
                    progress(f"{row['model']}/{row['dynamics']}/{row['backend']} replica {r}: loss={row['diagram_loss']:.3f}")
    finally:
        if pool is not None:
            pool.shutdown()
    return report


def recompute_aggregates(csv_path) -> dict:
    """Rebuild aggregates from a persisted per-replica CSV."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out: dict = {}
    for r in rows:
        name = "/".join((r["model"], r["dynamics"], r["backend"]))
        out.setdefault(name, []).append(r)
    agg = {}
    for name, rs in out.items():
        agg[name] = {m: _agg(float(r[m]) for r in rs) for m in METRICS if m != "best_sequence"}
    return agg


def is_close_agg(a: dict, b: dict) -> bool:
    for name in a:
        for m, e in a[name].items():
            if not isinstance(e, dict):
                continue
            for k, v in e.items():
                if not math.isclose(v, b[name][m][k], rel_tol=0, abs_tol=0):
                    return False
    return True


def format_set_list(states) -> str:
    return ",".join(format_set(s) for s in states)
