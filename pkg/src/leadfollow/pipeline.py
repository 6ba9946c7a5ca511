"""End-to-end inference on one dataset: network, leaders, diagram, followership."""
from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np

from .clustering import ClusterSet, Dendrogram, cluster_supports, modularity
from .core import Dataset, WindowSpec
from .dynamics import (
    DynamicsDiagram,
    EncodedSeries,
    SequenceMining,
    encode_states,
    fit_diagram,
    leader_set_supports,
    mine_frequent_sets,
    mine_sequences,
)
from .factions import FactionSeries, LeaderSeries, leader_series
from .following import DirectionParams, DynamicFollowingNetwork, build_direction_network, build_dynamic_network
from .followership import (
    CofactionNetwork,
    LeadFollowNetwork,
    SupportMatrices,
    build_cofaction_network,
    build_leadfollow_network,
    support_matrices,
)

log = logging.getLogger(__name__)

BACKENDS = ("following", "direction")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Inference parameters. ``omega`` has no default: pick it above the longest expected lag."""

    omega: int
    delta: int | None = None
    sigma: float = 0.5
    phi: float = 0.01
    phi_co: float = 0.8
    phi_lf: float = 0.1
    alpha: float = 0.01
    backend: str = "following"
    kernel: str = "euclidean"
    seed: int = 0

    def __post_init__(self):
        if self.omega is None or int(self.omega) < 2:
            raise ConfigError("omega is required and must be at least 2")
        if self.delta is not None and not 1 <= int(self.delta) <= int(self.omega):
            raise ConfigError("delta must lie in [1, omega]")
        for name in ("sigma", "phi", "phi_co", "phi_lf"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(int(self.omega), None if self.delta is None else int(self.delta))

    def to_json(self) -> dict:
        d = asdict(self)
        d["delta"] = self.window.delta
        return d


@dataclass
class PipelineResult:
    network: DynamicFollowingNetwork
    leaders: LeaderSeries
    factions: FactionSeries
    encoded: EncodedSeries | None
    diagram: DynamicsDiagram | None
    sequences: SequenceMining | None
    supports: SupportMatrices
    cofaction: CofactionNetwork
    leadfollow: LeadFollowNetwork
    dendrogram: Dendrogram
    clusters: ClusterSet
    Q: float


def infer_network(ds: Dataset, cfg: PipelineConfig) -> DynamicFollowingNetwork:
    if cfg.backend == "direction":
        return build_direction_network(ds, cfg.window, DirectionParams())
    return build_dynamic_network(ds, cfg.window, cfg.sigma, cfg.kernel)


def infer_diagram(L: LeaderSeries, phi: float) -> tuple[EncodedSeries, DynamicsDiagram]:
    freq = mine_frequent_sets(L, phi)
    enc = encode_states(L, freq)
    return enc, fit_diagram(enc, leader_set_supports(L))


def followership(F: FactionSeries, cfg: PipelineConfig):
    sm = support_matrices(F)
    co = build_cofaction_network(F, cfg.phi_co, sm)
    lf = build_leadfollow_network(F, cfg.phi_lf, sm)
    D, clusters = cluster_supports(sm.co, sm.nodes)
    Q = modularity(co.adjacency, clusters, sm.nodes)
    return sm, co, lf, D, clusters, Q


def run_pipeline(ds: Dataset, cfg: PipelineConfig) -> PipelineResult:
    dyn = infer_network(ds, cfg)
    L, F = leader_series(dyn)
    try:
        enc, diagram = infer_diagram(L, cfg.phi)
        seqs = mine_sequences(diagram, enc) if diagram.n >= 2 else None
    except ValueError as exc:
        log.warning("no diagram: %s", exc)
        enc = diagram = seqs = None
    sm, co, lf, D, clusters, Q = followership(F, cfg)
    return PipelineResult(dyn, L, F, enc, diagram, seqs, sm, co, lf, D, clusters, Q)
