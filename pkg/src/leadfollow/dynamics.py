"""Frequent leader sets, the transition diagram and max-probability sequences."""
from __future__ import annotations

import heapq
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import id_key
from .factions import LeaderSeries, format_set

log = logging.getLogger(__name__)


class NoFrequentStates(ValueError):
    pass


class DegenerateSequence(ValueError):
    pass


def _set_key(s) -> tuple:
    return (len(s), tuple(id_key(x) for x in sorted(s, key=id_key)))


@dataclass(frozen=True)
class LeaderSetSupport:
    set: frozenset
    supp: float


def leader_set_supports(L: LeaderSeries | Sequence[frozenset]) -> dict[frozenset, float]:
    """Support of every observed leader set, the empty set included."""
    entries = list(L)
    if not entries:
        return {}
    counts = Counter(entries)
    T = len(entries)
    return {s: c / T for s, c in counts.items()}


def mine_frequent_sets(L, phi: float = 0.01) -> list[LeaderSetSupport]:
    """Non-empty leader sets whose support is at least ``phi``.

    Ordered by support (descending), then by set size and ids.
    """
    if not 0 <= phi <= 1:
        raise ValueError("phi must lie in [0, 1]")
    sup = leader_set_supports(L)
    out = [LeaderSetSupport(s, v) for s, v in sup.items() if s and v >= phi]
    out.sort(key=lambda x: (-x.supp, _set_key(x.set)))
    return out


@dataclass(frozen=True)
class EncodedSeries:
    """Leader series restricted to frequent sets.

    ``seq`` holds 0-based state indices into ``states``; ``positions`` are the
    window indices that survived (empty and infrequent windows are dropped).
    """

    states: tuple[frozenset, ...]
    seq: np.ndarray
    positions: np.ndarray

    def __len__(self) -> int:
        return len(self.seq)


def encode_states(L, frequent) -> EncodedSeries:
    """Replace every frequent leader set by its state number, dropping the rest.

    States are numbered in order of first appearance in ``L``.
    """
    fsets = {f.set if isinstance(f, LeaderSetSupport) else frozenset(f) for f in frequent}
    fsets.discard(frozenset())
    if not fsets:
        raise NoFrequentStates("no frequent leader sets; lower phi")
    order: dict[frozenset, int] = {}
    seq, pos = [], []
    for t, s in enumerate(L):
        if s in fsets:
            if s not in order:
                order[s] = len(order)
            seq.append(order[s])
            pos.append(t)
    # frequent sets never observed cannot happen when they come from the same L,
    # but keep them addressable when passed in from elsewhere
    for s in sorted(fsets - set(order), key=_set_key):
        order[s] = len(order)
    states = tuple(sorted(order, key=order.get))
    return EncodedSeries(states, np.asarray(seq, dtype=np.int64), np.asarray(pos, dtype=np.int64))


# --------------------------------------------------------------------------
# Baum-Welch


@dataclass
class HMMFit:
    A: np.ndarray
    pi: np.ndarray
    loglik: float
    n_iter: int
    history: list = field(default_factory=list)


def _forward_backward(obs, A, B, pi):
    T = len(obs)
    m = A.shape[0]
    alpha = np.zeros((T, m))
    scale = np.zeros(T)
    a = pi * B[:, obs[0]]
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for t in range(1, T):
        a = (alpha[t - 1] @ A) * B[:, obs[t]]
        scale[t] = a.sum()
        if scale[t] == 0:
            return None
        alpha[t] = a / scale[t]
    beta = np.zeros((T, m))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (A @ (B[:, obs[t + 1]] * beta[t + 1])) / scale[t + 1]
    return alpha, beta, scale


def baum_welch(
    obs: np.ndarray,
    n_states: int,
    B: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> HMMFit:
    """EM estimate of transitions and initial distribution with fixed emissions.

    Starts from uniform A and pi. ``B`` defaults to the identity (each state
    emits its own index). States with no outgoing expected transitions are
    made absorbing so that A stays row-stochastic.
    """
    obs = np.asarray(obs, dtype=np.int64)
    m = n_states
    if B is None:
        B = np.eye(m)
    A = np.full((m, m), 1.0 / m)
    pi = np.full(m, 1.0 / m)
    prev = -np.inf
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        fb = _forward_backward(obs, A, B, pi)
        if fb is None:
            raise DegenerateSequence("observation sequence has zero likelihood under the model")
        alpha, beta, scale = fb
        ll = float(np.log(scale).sum())
        history.append(ll)
        gamma = alpha * beta
        gamma /= gamma.sum(axis=1, keepdims=True)
        x = alpha[:-1, :, None] * A[None] * (B[:, obs[1:]].T * beta[1:])[:, None, :]
        xi = (x / x.sum(axis=(1, 2), keepdims=True)).sum(axis=0)
        denom = xi.sum(axis=1)
        newA = np.zeros_like(A)
        ok = denom > 0
        newA[ok] = xi[ok] / denom[ok, None]
        for i in np.flatnonzero(~ok):
            newA[i, i] = 1.0
        A = newA
        pi = gamma[0]
        if ll - prev < tol:
            break
        prev = ll
    return HMMFit(A, pi, history[-1], it, history)


def normalize_offdiag(A: np.ndarray) -> np.ndarray:
    """Drop self-transitions and renormalise each row over the remaining states."""
    A = np.asarray(A, dtype=float)
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    rs = off.sum(axis=1)
    out = np.zeros_like(off)
    ok = rs > 0
    out[ok] = off[ok] / rs[ok, None]
    return out


@dataclass(frozen=True)
class DynamicsDiagram:
    states: tuple[frozenset, ...]
    supports: tuple[float, ...]
    A_star: np.ndarray
    A: np.ndarray | None = None
    pi: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.states)

    def edges(self) -> list[tuple[int, int, float]]:
        i, j = np.nonzero(self.A_star > 0)
        return [(int(a), int(b), float(self.A_star[a, b])) for a, b in zip(i, j)]

    def edge_weights(self) -> np.ndarray:
        return self.A_star[self.A_star > 0]

    def index(self, s) -> int:
        return self.states.index(frozenset(str(x) for x in s))

    def to_json(self) -> dict:
        return {
            "nodes": [{"set": sorted(s, key=id_key), "supp": round(float(p), 12)} for s, p in zip(self.states, self.supports)],
            "edges": [
                {"from": sorted(self.states[a], key=id_key), "to": sorted(self.states[b], key=id_key), "prob": round(w, 12)}
                for a, b, w in self.edges()
            ],
            "A": None if self.A is None else np.round(self.A, 12).tolist(),
            "pi": None if self.pi is None else np.round(self.pi, 12).tolist(),
        }

    @classmethod
    def from_json(cls, rec: dict) -> "DynamicsDiagram":
        states = tuple(frozenset(str(x) for x in nd["set"]) for nd in rec["nodes"])
        sup = tuple(float(nd["supp"]) for nd in rec["nodes"])
        idx = {s: k for k, s in enumerate(states)}
        As = np.zeros((len(states), len(states)))
        for e in rec["edges"]:
            As[idx[frozenset(str(x) for x in e["from"])], idx[frozenset(str(x) for x in e["to"])]] = float(e["prob"])
        A = None if rec.get("A") is None else np.asarray(rec["A"], dtype=float)
        pi = None if rec.get("pi") is None else np.asarray(rec["pi"], dtype=float)
        return cls(states, sup, As, A, pi)

    def to_dot(self) -> str:
        lines = ["digraph diagram {"]
        for k, (s, p) in enumerate(zip(self.states, self.supports)):
            lines.append(f'  s{k} [label="{format_set(s)}\\n{p:.2f}"];')
        for a, b, w in self.edges():
            lines.append(f'  s{a} -> s{b} [label="{w:.2f}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def fit_diagram(
    enc: EncodedSeries,
    supports: dict | None = None,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> DynamicsDiagram:
    """Fit transitions by Baum-Welch with identity emissions and normalise them.

    ``supports`` maps leader sets to their support over the full series; when
    omitted the fraction of surviving windows is used instead.
    """
    m = len(enc.states)
    if len(enc.seq) < 2:
        raise DegenerateSequence("need at least two encoded windows")
    if supports is None:
        cnt = np.bincount(enc.seq, minlength=m)
        sup = tuple(float(c) / len(enc.seq) for c in cnt)
    else:
        sup = tuple(float(supports.get(s, 0.0)) for s in enc.states)
    if len(np.unique(enc.seq)) == 1:
        log.warning("single state observed; diagram has no edges")
    fit = baum_welch(enc.seq, m, tol=tol, max_iter=max_iter)
    return DynamicsDiagram(enc.states, sup, normalize_offdiag(fit.A), fit.A, fit.pi)


# --------------------------------------------------------------------------
# sequence mining


@dataclass(frozen=True)
class LeaderPath:
    nodes: tuple[int, ...]
    states: tuple[frozenset, ...]
    supp: float
    nu: int
    cost: float

    def label(self) -> str:
        return ",".join(format_set(s) for s in self.states)


@dataclass
class SequenceMining:
    paths: list[LeaderPath]
    unreachable: list[tuple[int, int]]
    n_changes: int

    def __iter__(self):
        return iter(self.paths)

    def __len__(self) -> int:
        return len(self.paths)

    def best(self) -> LeaderPath | None:
        return self.paths[0] if self.paths else None

    def supports(self) -> np.ndarray:
        return np.array([p.supp for p in self.paths])

    def to_json(self) -> dict:
        return {
            "n_changes": self.n_changes,
            "sequences": [
                {"sequence": [sorted(s, key=id_key) for s in p.states], "label": p.label(), "supp_path": round(p.supp, 12), "nu": p.nu}
                for p in self.paths
            ],
            "unreachable": [list(u) for u in self.unreachable],
        }


def dijkstra_paths(A_star: np.ndarray, source: int) -> dict[int, tuple[float, tuple[int, ...]]]:
    """Shortest paths from ``source`` under edge cost 1 / a*.

    Equal-cost alternatives resolve to the lexicographically smaller node tuple.
    """
    m = A_star.shape[0]
    best: dict[int, tuple[float, tuple[int, ...]]] = {}
    heap = [(0.0, (source,))]
    while heap:
        cost, path = heapq.heappop(heap)
        u = path[-1]
        if u in best:
            continue
        best[u] = (cost, path)
        for v in range(m):
            w = A_star[u, v]
            if v != u and w > 0 and v not in best:
                heapq.heappush(heap, (cost + 1.0 / w, path + (v,)))
    return best


def state_changes(seq) -> list[tuple[int, int]]:
    seq = np.asarray(seq)
    idx = np.flatnonzero(seq[1:] != seq[:-1])
    return [(int(seq[k]), int(seq[k + 1])) for k in idx]


def count_occurrences(path: Sequence[int], seq, strict: bool = False) -> int:
    """How often a path occurs in the encoded series.

    Default: the rarest of the path's consecutive transitions, each counted as
    a state change. ``strict`` counts contiguous runs of the whole path in the
    sequence of state changes.
    """
    changes = state_changes(seq)
    if len(path) < 2:
        return 0
    if not strict:
        c = Counter(changes)
        return min(c[(path[k], path[k + 1])] for k in range(len(path) - 1))
    runs = [changes[0][0]] + [b for _, b in changes] if changes else []
    k = len(path)
    return sum(1 for s in range(len(runs) - k + 1) if tuple(runs[s:s + k]) == tuple(path))


def path_support(path: Sequence[int], seq, strict: bool = False) -> tuple[float, int]:
    N = len(state_changes(seq))
    nu = count_occurrences(path, seq, strict)
    return (nu * (len(path) - 1) / N if N else 0.0), nu


def mine_sequences(diagram: DynamicsDiagram, seq, strict: bool = False) -> SequenceMining:
    """Max-probability path and its support for every ordered pair of states."""
    if diagram.n < 2:
        raise DegenerateSequence("need at least two diagram nodes")
    seq = np.asarray(seq.seq if isinstance(seq, EncodedSeries) else seq)
    N = len(state_changes(seq))
    paths, unreachable = [], []
    for i in range(diagram.n):
        reach = dijkstra_paths(diagram.A_star, i)
        for j in range(diagram.n):
            if i == j:
                continue
            if j not in reach:
                unreachable.append((i, j))
                continue
            cost, p = reach[j]
            supp, nu = path_support(p, seq, strict)
            paths.append(LeaderPath(p, tuple(diagram.states[k] for k in p), supp, nu, cost))
    paths.sort(key=lambda x: (-x.supp, x.nodes))
    if unreachable:
        log.info("%d ordered state pairs unreachable in the diagram", len(unreachable))
    return SequenceMining(paths, unreachable, N)


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")
