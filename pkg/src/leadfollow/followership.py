"""Co-faction and lead-follow supports and the networks built on them."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .core import sorted_ids
from .factions import FactionSeries


class UnknownId(KeyError):
    pass


@dataclass(frozen=True)
class SupportMatrices:
    """Pair supports accumulated over one faction series.

    ``co[i, j]`` is the co-faction support (zero diagonal); ``lf[i, j]`` is
    the support of follower ``i`` sitting in the faction initiated by ``j``.
    """

    nodes: tuple[str, ...]
    co: np.ndarray
    lf: np.ndarray
    T: int

    def idx(self, label) -> int:
        try:
            return self.nodes.index(str(label))
        except ValueError:
            raise UnknownId(label) from None

    @property
    def initiators(self) -> tuple[str, ...]:
        cols = np.flatnonzero(self.lf.sum(axis=0) > 0)
        return tuple(self.nodes[k] for k in cols)


def support_matrices(F: FactionSeries, nodes=None) -> SupportMatrices:
    """One pass over the faction series; denominators are the full window count."""
    nodes = tuple(sorted_ids(nodes)) if nodes is not None else F.nodes
    pos = {v: k for k, v in enumerate(nodes)}
    n = len(nodes)
    co = np.zeros((n, n))
    lf = np.zeros((n, n))
    for fs in F:
        for f in fs:
            idx = np.array([pos[m] for m in f.members], dtype=np.int64)
            co[np.ix_(idx, idx)] += 1
            lf[idx, pos[f.initiator]] += 1
    T = len(F)
    if T:
        co /= T
        lf /= T
    np.fill_diagonal(co, 0.0)
    return SupportMatrices(nodes, co, lf, T)


def csupp(F: FactionSeries, i, j) -> float:
    if str(i) == str(j):
        raise ValueError("csupp needs two distinct individuals")
    i, j = str(i), str(j)
    if i not in F.nodes or j not in F.nodes:
        raise UnknownId(i if i not in F.nodes else j)
    if not len(F):
        return 0.0
    hits = sum(any(i in f.members and j in f.members for f in fs) for fs in F)
    return hits / len(F)


def lfsupp(F: FactionSeries, i, j) -> float:
    """Fraction of windows in which ``i`` belongs to the faction initiated by ``j``."""
    i, j = str(i), str(j)
    if i not in F.nodes or j not in F.nodes:
        raise UnknownId(i if i not in F.nodes else j)
    if not len(F):
        return 0.0
    hits = sum(any(f.initiator == j and i in f.members for f in fs) for fs in F)
    return hits / len(F)


@dataclass(frozen=True)
class CofactionNetwork:
    nodes: tuple[str, ...]
    weights: np.ndarray  # full csupp matrix, zero diagonal
    adjacency: np.ndarray  # weights below threshold set to 0
    threshold: float

    def edges(self) -> list[tuple[str, str, float]]:
        # zero-support pairs are edges too when the threshold is zero
        i, j = np.nonzero(np.triu(self.weights >= self.threshold, k=1))
        return [(self.nodes[a], self.nodes[b], float(self.weights[a, b])) for a, b in zip(i, j)]

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "nodes": list(self.nodes),
            "edges": [{"from": a, "to": b, "weight": round(w, 12)} for a, b, w in self.edges()],
        }

    def to_dot(self) -> str:
        lines = ["graph cofaction {"]
        lines += [f'  "{v}";' for v in self.nodes]
        lines += [f'  "{a}" -- "{b}" [weight={w:.4f}];' for a, b, w in self.edges()]
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LeadFollowNetwork:
    followers: tuple[str, ...]
    leaders: tuple[str, ...]
    weights: np.ndarray  # (n_followers, n_leaders) lfsupp values
    threshold: float

    def edges(self) -> list[tuple[str, str, float]]:
        i, j = np.nonzero(self.weights >= self.threshold) if self.weights.size else ([], [])
        return [(self.followers[a], self.leaders[b], float(self.weights[a, b])) for a, b in zip(i, j)]

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "followers": list(self.followers),
            "leaders": list(self.leaders),
            # a leader's own entry (lfsupp(j, j)) is how often it initiates
            "edges": [
                {"from": a, "to": b, "weight": round(w, 12), "self": a == b} for a, b, w in self.edges()
            ],
        }

    def to_dot(self) -> str:
        lines = ["digraph leadfollow {", "  rankdir=LR;", "  subgraph cluster_followers {"]
        lines += [f'    "F{v}" [label="{v}"];' for v in self.followers]
        lines += ["  }", "  subgraph cluster_leaders {"]
        lines += [f'    "L{v}" [label="{v}", shape=box];' for v in self.leaders]
        lines += ["  }"]
        lines += [f'  "F{a}" -> "L{b}" [weight={w:.4f}];' for a, b, w in self.edges()]
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_cofaction_network(F: FactionSeries, phi_co: float, sm: SupportMatrices | None = None) -> CofactionNetwork:
    if not 0 <= phi_co:
        raise ValueError("phi_CO must be non-negative")
    sm = sm or support_matrices(F)
    adj = np.where(sm.co >= phi_co, sm.co, 0.0)
    np.fill_diagonal(adj, 0.0)
    return CofactionNetwork(sm.nodes, sm.co, adj, phi_co)


def build_leadfollow_network(F: FactionSeries, phi_lf: float = 0.1, sm: SupportMatrices | None = None) -> LeadFollowNetwork:
    sm = sm or support_matrices(F)
    leaders = sm.initiators
    cols = [sm.idx(v) for v in leaders]
    W = sm.lf[:, cols] if cols else np.zeros((len(sm.nodes), 0))
    return LeadFollowNetwork(sm.nodes, leaders, W, phi_lf)


def write_matrix_csv(nodes, M: np.ndarray, path, cols=None) -> None:
    cols = nodes if cols is None else cols
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(cols))
        for v, row in zip(nodes, M):
            w.writerow([v] + [f"{x:.6f}" for x in row])


def read_matrix_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0][1:]
    names = [r[0] for r in rows[1:]]
    M = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return names, cols, M


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
