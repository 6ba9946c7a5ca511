"""Command-line front end: one subcommand per stage, files in and files out.

Settings resolve in this order, later wins: built-in defaults, the config
file (TOML or JSON), ``LEADFOLLOW_*`` environment variables, command-line
flags. Progress goes to stderr; artifacts are only ever written to files.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .clustering import cluster_dot, cluster_supports, clusters_to_json, modularity, write_dendrogram_csv
from .core import DataError, InvalidWindowSpec, OmegaExceedsLength, ensure_dir, ingest_csv
from .dynamics import mine_sequences
from .evaluation import ExperimentConfig, run_experiment
from .factions import (
    format_set,
    leader_series,
    read_factions_jsonl,
    read_leaders_jsonl,
    write_factions_jsonl,
    write_leaders_jsonl,
)
from .following import dynamic_to_dot, read_network_jsonl, write_network_jsonl
from .followership import (
    build_cofaction_network,
    build_leadfollow_network,
    read_matrix_csv,
    support_matrices,
    write_json,
    write_matrix_csv,
)
from .pipeline import ConfigError, PipelineConfig, infer_diagram, infer_network
from .simgen import DYNAMICS, MODELS, InvalidSpec, ScenarioSpec, simulate, simulate_batch, write_scenario
from .stattests import significance_protocol

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("leadfollow")

ENV_PREFIX = "LEADFOLLOW_"
OMEGA_HELP = (
    "window length in time steps (required, no default). Pick it above the longest "
    "time delay you expect between a leader and its followers."
)


class InputError(Exception):
    pass


class ComputeError(Exception):
    pass


EXIT_CODES = ((ConfigError, 2), (InputError, 3), (ComputeError, 4))

_CASTS = {"omega": int, "delta": int, "seed": int, "backend": str, "kernel": str}
PIPELINE_KEYS = tuple(f.name for f in fields(PipelineConfig))


# --------------------------------------------------------------------------
# config resolution


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    try:
        if p.suffix.lower() == ".json":
            return json.loads(raw.decode("utf-8"))
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from None


def env_overrides(keys, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for k in keys:
        v = environ.get(ENV_PREFIX + k.upper())
        if v is not None and v != "":
            out[k] = v
    return out


def _cast(key: str, value):
    if value is None:
        return None
    try:
        return _CASTS.get(key, float)(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def resolve_pipeline(args, cfg: dict, environ=None) -> PipelineConfig:
    values: dict = {}
    values.update({k: v for k, v in cfg.get("pipeline", {}).items() if k in PIPELINE_KEYS})
    values.update(env_overrides(PIPELINE_KEYS, environ))
    for k in PIPELINE_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    unknown = set(cfg.get("pipeline", {})) - set(PIPELINE_KEYS)
    if unknown:
        raise ConfigError(f"unknown pipeline keys: {sorted(unknown)}")
    if values.get("omega") is None:
        raise ConfigError("omega is required: " + OMEGA_HELP)
    return PipelineConfig(**{k: _cast(k, v) for k, v in values.items()})


def resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    seed = int(np.random.SeedSequence().entropy % 2**32)
    log.warning("no seed given; generated seed=%d", seed)
    return seed


def _path(args, cfg: dict, name: str, required: bool = True):
    v = getattr(args, name, None)
    if v is None:
        v = cfg.get("paths", {}).get(name)
    if v is None:
        v = os.environ.get(ENV_PREFIX + name.upper())
    if v is None and required:
        raise ConfigError(f"missing --{name.replace('_', '-')}")
    return None if v is None else Path(v)


def _read(fn, path):
    try:
        return fn(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _emit(text: str, path) -> None:
    path = Path(path)
    ensure_dir(path.parent)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


# --------------------------------------------------------------------------
# stages


def cmd_simulate(args, cfg) -> None:
    scen = dict(cfg.get("scenario", {}))
    for k in ("model", "dynamics", "n", "T", "k", "rho"):
        v = getattr(args, k)
        if v is not None:
            scen[k] = v
    seed = resolve_seed(args.seed if args.seed is not None else scen.pop("seed", None))
    scen.pop("seed", None)
    try:
        spec = ScenarioSpec(**scen, seed=seed)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    out = _path(args, cfg, "out")
    if args.replicas > 1:
        manifest = simulate_batch(spec, args.replicas, seed, out)
        log.info("wrote %d replicas, manifest %s", args.replicas, manifest)
        return
    ds, gt = simulate(spec)
    csv_path, gt_path = write_scenario(ds, gt, out, args.stem)
    log.info("wrote %s and %s", csv_path, gt_path)


def stage_network(data, pcfg: PipelineConfig, out, fmt: str = "json") -> None:
    ds = _read(ingest_csv, data)
    try:
        dyn = infer_network(ds, pcfg)
    except (OmegaExceedsLength, InvalidWindowSpec) as exc:
        raise ConfigError(str(exc)) from None
    log.info("%d windows, %d individuals", len(dyn), len(dyn.nodes))
    if fmt == "dot":
        _emit(dynamic_to_dot(dyn), out)
    else:
        ensure_dir(Path(out).parent)
        write_network_jsonl(dyn, out)


def stage_leaders(network, out_dir) -> None:
    dyn = _read(read_network_jsonl, network)
    L, F = leader_series(dyn)
    out = ensure_dir(out_dir)
    write_leaders_jsonl(L, out / "leaders.jsonl")
    write_factions_jsonl(F, out / "factions.jsonl")


def _diagram(leaders, phi: float):
    L = _read(read_leaders_jsonl, leaders)
    try:
        enc, diagram = infer_diagram(L, phi)
    except ValueError as exc:
        raise ComputeError(f"no diagram: {exc}") from None
    return L, enc, diagram


def _matrix_csv(labels, M) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(labels))
    for lab, row in zip(labels, M):
        w.writerow([lab] + [f"{x:.12g}" for x in row])
    return buf.getvalue()


def stage_diagram(leaders, phi: float, out, fmt: str = "json") -> None:
    _, _, diagram = _diagram(leaders, phi)
    if fmt == "dot":
        _emit(diagram.to_dot(), out)
    elif fmt == "csv":
        _emit(_matrix_csv([format_set(s) for s in diagram.states], diagram.A_star), out)
    else:
        _emit(json.dumps(diagram.to_json(), indent=2) + "\n", out)


def stage_sequences(leaders, phi: float, out, fmt: str = "json", strict: bool = False) -> None:
    _, enc, diagram = _diagram(leaders, phi)
    if diagram.n < 2:
        raise ComputeError("sequence mining needs at least two frequent leader sets")
    seqs = mine_sequences(diagram, enc, strict=strict)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sequence", "supp_path", "nu"])
        for p in seqs.paths:
            w.writerow([p.label(), f"{p.supp:.12g}", p.nu])
        _emit(buf.getvalue(), out)
    else:
        _emit(json.dumps(seqs.to_json(), indent=2) + "\n", out)
    best = seqs.best()
    if best is not None:
        log.info("best sequence %s supp=%.3f", best.label(), best.supp)


def stage_test(leaders, phi: float, out, kinds, R: int, alpha: float, seed: int, calibrate: bool = False) -> None:
    L, enc, diagram = _diagram(leaders, phi)
    reports = []
    for k, kind in enumerate(kinds):
        try:
            rep = significance_protocol(
                kind, leaders=L, diagram=diagram, encoded=enc, R=R, alpha=alpha, seed=seed + k, phi=phi,
                calibrate=calibrate,
            )
        except ValueError as exc:
            raise ComputeError(str(exc)) from None
        log.info("%s", rep.summary())
        reports.append(rep.to_json())
    _emit(json.dumps({"reports": reports}, indent=2) + "\n", out)


def stage_followership(factions, phi_co: float, phi_lf: float, out_dir, fmt: str = "json") -> None:
    F = _read(read_factions_jsonl, factions)
    sm = support_matrices(F)
    co = build_cofaction_network(F, phi_co, sm)
    lf = build_leadfollow_network(F, phi_lf, sm)
    out = ensure_dir(out_dir)
    if fmt == "dot":
        _emit(co.to_dot(), out / "cofaction.dot")
        _emit(lf.to_dot(), out / "leadfollow.dot")
    elif fmt == "csv":
        write_matrix_csv(sm.nodes, sm.co, out / "cofaction.csv")
        write_matrix_csv(lf.followers, lf.weights, out / "leadfollow.csv", cols=lf.leaders)
    else:
        write_json(co.to_json(), out / "cofaction.json")
        write_json(lf.to_json(), out / "leadfollow.json")
        write_matrix_csv(sm.nodes, sm.co, out / "cofaction.csv")


def stage_cluster(source, phi_co: float, out_dir, fmt: str = "json") -> None:
    """Clusters from a factions JSONL file or a co-faction support CSV."""
    source = Path(source)
    if source.suffix == ".csv":
        nodes, _, M = _read(read_matrix_csv, source)
    else:
        F = _read(read_factions_jsonl, source)
        sm = support_matrices(F)
        nodes, M = list(sm.nodes), sm.co
    try:
        D, clusters = cluster_supports(M, nodes)
        adj = np.where(M >= phi_co, M, 0.0)
        Q = modularity(adj, clusters, nodes)
    except ValueError as exc:
        raise ComputeError(str(exc)) from None
    out = ensure_dir(out_dir)
    if fmt == "dot":
        _emit(cluster_dot(clusters, M, nodes), out / "clusters.dot")
    elif fmt == "csv":
        write_dendrogram_csv(D, out / "dendrogram.csv")
    else:
        write_json(clusters_to_json(clusters, Q), out / "clusters.json")
        write_dendrogram_csv(D, out / "dendrogram.csv")
    log.info("%d clusters, Q=%.4f", len(clusters), Q)


def cmd_infer_network(args, cfg) -> None:
    pcfg = resolve_pipeline(args, cfg)
    stage_network(_path(args, cfg, "data"), pcfg, _path(args, cfg, "out"), args.format)


def cmd_leaders(args, cfg) -> None:
    stage_leaders(_path(args, cfg, "network"), _path(args, cfg, "out"))


def _phi(args, cfg, key: str, default: float) -> float:
    v = getattr(args, key, None)
    if v is None:
        v = env_overrides((key,)).get(key, cfg.get("pipeline", {}).get(key, default))
    return _cast(key, v)


def cmd_diagram(args, cfg) -> None:
    stage_diagram(_path(args, cfg, "leaders"), _phi(args, cfg, "phi", 0.01), _path(args, cfg, "out"), args.format)


def cmd_sequences(args, cfg) -> None:
    stage_sequences(
        _path(args, cfg, "leaders"), _phi(args, cfg, "phi", 0.01), _path(args, cfg, "out"), args.format, args.strict
    )


def cmd_test(args, cfg) -> None:
    kinds = ("edge-weight", "sequence-support") if args.kind == "both" else (args.kind,)
    seed = resolve_seed(args.seed if args.seed is not None else cfg.get("pipeline", {}).get("seed"))
    stage_test(
        _path(args, cfg, "leaders"), _phi(args, cfg, "phi", 0.01), _path(args, cfg, "out"), kinds,
        args.reps, _phi(args, cfg, "alpha", 0.01), seed, args.calibrate,
    )


def cmd_followership(args, cfg) -> None:
    stage_followership(
        _path(args, cfg, "factions"), _phi(args, cfg, "phi_co", 0.8), _phi(args, cfg, "phi_lf", 0.1),
        _path(args, cfg, "out"), args.format,
    )


def cmd_cluster(args, cfg) -> None:
    src = _path(args, cfg, "matrix", required=False) or _path(args, cfg, "factions")
    stage_cluster(src, _phi(args, cfg, "phi_co", 0.8), _path(args, cfg, "out"), args.format)


def cmd_evaluate(args, cfg) -> None:
    d = dict(cfg.get("experiment", {}))
    if "pipeline" in cfg:
        d["pipeline"] = dict(cfg["pipeline"])
    if "scenario" in cfg:
        d["scenario"] = dict(cfg["scenario"])
    if args.replicas is not None:
        d["replicas"] = args.replicas
    if args.seed is not None:
        d["seed"] = args.seed
    d["seed"] = resolve_seed(d.get("seed"))
    pipe = dict(d.get("pipeline", {}))
    pipe.update(env_overrides(PIPELINE_KEYS))
    if args.omega is not None:
        pipe["omega"] = args.omega
    if pipe.get("omega") is None:
        raise ConfigError("omega is required: " + OMEGA_HELP)
    d["pipeline"] = {k: _cast(k, v) for k, v in pipe.items()}
    try:
        ecfg = ExperimentConfig.from_dict(d)
    except (TypeError, InvalidSpec) as exc:
        raise ConfigError(str(exc)) from None
    report = run_experiment(ecfg, progress=lambda msg: log.info("%s", msg), workers=args.workers)
    out = _path(args, cfg, "out")
    report.write(out)
    if report.failures:
        log.warning("%d replicas excluded", len(report.failures))
    log.info("wrote %s", out)


def cmd_pipeline(args, cfg) -> None:
    """Chain every stage through the same files the single-stage commands write."""
    pcfg = resolve_pipeline(args, cfg)
    data = _path(args, cfg, "data")
    out = ensure_dir(_path(args, cfg, "out"))
    write_json(pcfg.to_json(), out / "config.json")
    log.info("stage 1/6: following network")
    stage_network(data, pcfg, out / "network.jsonl")
    log.info("stage 2/6: leaders and factions")
    stage_leaders(out / "network.jsonl", out)
    log.info("stage 3/6: leadership diagram")
    stage_diagram(out / "leaders.jsonl", pcfg.phi, out / "diagram.json")
    stage_diagram(out / "leaders.jsonl", pcfg.phi, out / "diagram.dot", "dot")
    log.info("stage 4/6: sequences")
    stage_sequences(out / "leaders.jsonl", pcfg.phi, out / "sequences.json")
    log.info("stage 5/6: significance tests")
    stage_test(
        out / "leaders.jsonl", pcfg.phi, out / "tests.json", ("edge-weight", "sequence-support"),
        args.reps, pcfg.alpha, pcfg.seed,
    )
    log.info("stage 6/6: followership and clusters")
    stage_followership(out / "factions.jsonl", pcfg.phi_co, pcfg.phi_lf, out)
    stage_followership(out / "factions.jsonl", pcfg.phi_co, pcfg.phi_lf, out, "dot")
    stage_cluster(out / "factions.jsonl", pcfg.phi_co, out)
    stage_cluster(out / "factions.jsonl", pcfg.phi_co, out, "dot")


# --------------------------------------------------------------------------
# argument parsing


def _pipeline_flags(p: argparse.ArgumentParser, omega: bool = True) -> None:
    if omega:
        p.add_argument("--omega", type=int, help=OMEGA_HELP)
        p.add_argument("--delta", type=int, help="window step (default round(0.1 * omega))")
    p.add_argument("--sigma", type=float, help="f-score threshold for a following edge (default 0.5)")
    p.add_argument("--backend", choices=("following", "direction"))
    p.add_argument("--kernel", choices=("euclidean", "weighted-euclidean"))
    p.add_argument("--phi", type=float, help="frequent leader set threshold (default 0.01)")
    p.add_argument("--phi-co", dest="phi_co", type=float, help="co-faction edge threshold (default 0.8)")
    p.add_argument("--phi-lf", dest="phi_lf", type=float, help="lead-follow edge threshold (default 0.1)")
    p.add_argument("--alpha", type=float, help="significance level (default 0.01)")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leadfollow", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset and its ground truth")
    p.add_argument("--model", choices=MODELS + tuple(m.lower() for m in MODELS))
    p.add_argument("--dynamics", choices=DYNAMICS + ("type-1", "type-2", "1", "2"))
    p.add_argument("--n", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--k", type=int, help="IC: nearest inactive neighbours tried per step")
    p.add_argument("--rho", type=float, help="IC: activation probability")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--stem", default="dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer-network", help="dynamic following network from trajectories")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "dot"), default="json")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_infer_network)

    p = sub.add_parser("leaders", help="leader and faction series from a network file")
    p.add_argument("--network")
    p.add_argument("--out")
    p.set_defaults(func=cmd_leaders)

    p = sub.add_parser("diagram", help="leadership-dynamics diagram")
    p.add_argument("--leaders")
    p.add_argument("--phi", type=float)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "dot", "csv"), default="json")
    p.set_defaults(func=cmd_diagram)

    p = sub.add_parser("sequences", help="sequence mining on the diagram")
    p.add_argument("--leaders")
    p.add_argument("--phi", type=float)
    p.add_argument("--strict", action="store_true", help="count only contiguous occurrences")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_sequences)

    p = sub.add_parser("test", help="null-model significance tests")
    p.add_argument("--leaders")
    p.add_argument("--kind", choices=("edge-weight", "sequence-support", "both"), default="both")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--phi", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--calibrate", action="store_true", help="compare the null with itself")
    p.add_argument("--out")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("followership", help="co-faction and lead-follow networks")
    p.add_argument("--factions")
    p.add_argument("--phi-co", dest="phi_co", type=float)
    p.add_argument("--phi-lf", dest="phi_lf", type=float)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "dot", "csv"), default="json")
    p.set_defaults(func=cmd_followership)

    p = sub.add_parser("cluster", help="frequent co-faction clusters and modularity")
    p.add_argument("--factions")
    p.add_argument("--matrix", help="co-faction support CSV instead of a factions file")
    p.add_argument("--phi-co", dest="phi_co", type=float)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "dot", "csv"), default="json")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("evaluate", help="batch experiment over simulated replicas")
    p.add_argument("--omega", type=int, help=OMEGA_HELP)
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=None, help="process pool size (default: CPU count)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="all stages on one dataset")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--reps", type=int, default=100, help="significance test repetitions")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def _setup_logging(verbose: int, quiet: bool) -> None:
    level = logging.WARNING if quiet else (logging.DEBUG if verbose > 0 else logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose, args.quiet)
    if getattr(args, "workers", 0) is None:
        env = os.environ.get(ENV_PREFIX + "WORKERS")
        args.workers = int(env) if env else (os.cpu_count() or 1)
    try:
        cfg = load_config(args.config or os.environ.get(ENV_PREFIX + "CONFIG"))
        args.func(args, cfg)
    except (InvalidSpec, InvalidWindowSpec, OmegaExceedsLength) as exc:
        log.error("%s", exc)
        return 2
    except DataError as exc:
        log.error("%s", exc)
        return 3
    except tuple(c for c, _ in EXIT_CODES) as exc:
        log.error("%s", exc)
        return exit_code(exc)
    return 0


def exit_code(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
