"""Pairwise following relations via DTW and the dynamic following network.

Also hosts the direction-network baseline, which produces the same
``DynamicFollowingNetwork`` type from headings instead of warping paths.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import numba
from numba import njit, prange

from .core import Dataset, WindowSpec, windows

# TBB in this image is too old for numba; skip it when picking a threading layer.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

KERNELS = ("euclidean", "weighted-euclidean")


class EmptySegment(ValueError):
    pass


@dataclass(frozen=True)
class WarpingPath:
    pairs: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def transpose(self) -> "WarpingPath":
        return WarpingPath(tuple((j, i) for i, j in self.pairs))


@dataclass(frozen=True)
class FollowingNetwork:
    """Directed follower -> followed edges for one window."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...] = ()

    def __post_init__(self):
        seen = set()
        for a, b, _ in self.edges:
            if a == b:
                raise ValueError(f"self-edge on {a}")
            if (a, b) in seen or (b, a) in seen:
                raise ValueError(f"more than one edge between {a} and {b}")
            seen.add((a, b))

    def out_degree(self) -> dict[str, int]:
        deg = dict.fromkeys(self.nodes, 0)
        for a, _, _ in self.edges:
            deg[a] += 1
        return deg

    def in_degree(self) -> dict[str, int]:
        deg = dict.fromkeys(self.nodes, 0)
        for _, b, _ in self.edges:
            deg[b] += 1
        return deg

    def to_dot(self, name: str = "G") -> str:
        lines = [f"digraph {name} {{"]
        lines += [f'  "{v}";' for v in self.nodes]
        lines += [f'  "{a}" -> "{b}" [weight={w:.4f}, label="{w:.2f}"];' for a, b, w in self.edges]
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DynamicFollowingNetwork:
    nodes: tuple[str, ...]
    intervals: tuple[tuple[int, int], ...]
    networks: tuple[FollowingNetwork, ...]

    def __len__(self) -> int:
        return len(self.networks)

    def __getitem__(self, k) -> FollowingNetwork:
        return self.networks[k]

    def __iter__(self):
        return iter(self.networks)


# --------------------------------------------------------------------------
# DTW kernels


@njit(cache=True)
def _fill_cost(P, Q, w0, w1, band, D):
    L = P.shape[0]
    M = Q.shape[0]
    inf = np.inf
    if band < 0:
        band = L + M
    acc = 0.0
    for j in range(M):
        if j > band:
            D[0, j] = inf
            continue
        dx = P[0, 0] - Q[j, 0]
        dy = P[0, 1] - Q[j, 1]
        acc += math.sqrt(w0 * dx * dx + w1 * dy * dy)
        D[0, j] = acc
    for i in range(1, L):
        px = P[i, 0]
        py = P[i, 1]
        left = inf
        for j in range(M):
            if abs(i - j) > band:
                D[i, j] = inf
                left = inf
                continue
            dx = px - Q[j, 0]
            dy = py - Q[j, 1]
            d = math.sqrt(w0 * dx * dx + w1 * dy * dy)
            best = D[i - 1, j]
            if j > 0:
                diag = D[i - 1, j - 1]
                if diag < best:
                    best = diag
                if left < best:
                    best = left
            left = d + best
            D[i, j] = left


@njit(cache=True)
def _step_back(D, i, j):
    # Preference on ties: diagonal, then vertical (i-1), then horizontal (j-1).
    if i == 0:
        return i, j - 1
    if j == 0:
        return i - 1, j
    bi, bj = i - 1, j - 1
    best = D[i - 1, j - 1]
    if D[i - 1, j] < best:
        bi, bj = i - 1, j
        best = D[i - 1, j]
    if D[i, j - 1] < best:
        bi, bj = i, j - 1
    return bi, bj


@njit(cache=True)
def _backtrace(D):
    L = D.shape[0]
    M = D.shape[1]
    out = np.empty((L + M - 1, 2), dtype=np.int64)
    i = L - 1
    j = M - 1
    k = 0
    out[k, 0] = i
    out[k, 1] = j
    k += 1
    while i > 0 or j > 0:
        i, j = _step_back(D, i, j)
        out[k, 0] = i
        out[k, 1] = j
        k += 1
    return out[:k][::-1].copy()


@njit(cache=True)
def _sign_score(D):
    L = D.shape[0]
    M = D.shape[1]
    i = L - 1
    j = M - 1
    total = 0
    count = 1
    if j > i:
        total += 1
    elif j < i:
        total -= 1
    while i > 0 or j > 0:
        i, j = _step_back(D, i, j)
        count += 1
        if j > i:
            total += 1
        elif j < i:
            total -= 1
    return total / count


@njit(cache=True, parallel=True)
def _window_scores(X, starts, omega, pa, pb, w0, w1, band):
    nw = starts.shape[0]
    npairs = pa.shape[0]
    out = np.empty((nw, npairs))
    for k in prange(nw):
        D = np.empty((omega, omega))
        s = starts[k]
        for p in range(npairs):
            P = X[pa[p], s:s + omega]
            Q = X[pb[p], s:s + omega]
            _fill_cost(P, Q, w0, w1, band, D)
            out[k, p] = _sign_score(D)
    return out


def _kernel_weights(kernel: str, weights) -> tuple[float, float]:
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    if kernel == "euclidean":
        return 1.0, 1.0
    w = (1.0, 1.0) if weights is None else weights
    return float(w[0]), float(w[1])


def _as_segment(P) -> np.ndarray:
    P = np.ascontiguousarray(P, dtype=float)
    if P.ndim == 1:
        P = np.column_stack([P, np.zeros_like(P)])
    elif P.ndim == 2 and P.shape[1] == 1:
        P = np.column_stack([P[:, 0], np.zeros(P.shape[0])])
    if P.ndim != 2 or P.shape[1] != 2:
        raise ValueError(f"segments must be (L, 2) arrays, got shape {P.shape}")
    if P.shape[0] == 0:
        raise EmptySegment("DTW needs non-empty segments")
    return P


def dtw_matrix(P, Q, kernel: str = "euclidean", weights=None, band: int | None = None) -> np.ndarray:
    """Accumulated-cost matrix of the symmetric DTW recurrence."""
    P, Q = _as_segment(P), _as_segment(Q)
    w0, w1 = _kernel_weights(kernel, weights)
    D = np.empty((P.shape[0], Q.shape[0]))
    _fill_cost(P, Q, w0, w1, -1 if band is None else int(band), D)
    return D


def dtw_path(P, Q, kernel: str = "euclidean", weights=None, band: int | None = None) -> WarpingPath:
    """Optimal warping path between two segments (1-D input is treated as x only)."""
    D = dtw_matrix(P, Q, kernel, weights, band)
    if not np.isfinite(D[-1, -1]):
        raise ValueError("band too narrow for the segment lengths")
    return WarpingPath(tuple((int(i), int(j)) for i, j in _backtrace(D)))


def path_cost(P, Q, path: WarpingPath, kernel: str = "euclidean", weights=None) -> float:
    P, Q = _as_segment(P), _as_segment(Q)
    w0, w1 = _kernel_weights(kernel, weights)
    tot = 0.0
    for i, j in path.pairs:
        dx, dy = P[i] - Q[j]
        tot += math.sqrt(w0 * dx * dx + w1 * dy * dy)
    return tot


def follow_score(path: WarpingPath) -> float:
    """Mean of sign(j - i) over the path; positive when Q lags U."""
    if len(path) == 0:
        raise EmptySegment("empty warping path")
    return sum((j > i) - (j < i) for i, j in path.pairs) / len(path)


def follow_edge(p_id, q_id, score: float, sigma: float = 0.5):
    """Directed edge (follower, followed, weight) implied by a score, or None."""
    if not 0 < sigma <= 1:
        raise ValueError("sigma must be in (0, 1]")
    if score >= sigma:
        return (q_id, p_id, abs(score))
    if score <= -sigma:
        return (p_id, q_id, abs(score))
    return None


def pair_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.triu_indices(n, k=1)
    return a.astype(np.int64), b.astype(np.int64)


def follow_scores(
    ds: Dataset,
    spec: WindowSpec,
    kernel: str = "euclidean",
    weights=None,
    band: int | None = None,
) -> tuple[list[tuple[int, int]], np.ndarray]:
    """f-scores for every window and unordered pair (a < b), shape (n_windows, n_pairs)."""
    ivs = windows(ds.T, spec)
    w0, w1 = _kernel_weights(kernel, weights)
    pa, pb = pair_index(ds.n)
    starts = np.array([s for s, _ in ivs], dtype=np.int64)
    X = np.ascontiguousarray(ds.xy, dtype=float)
    F = _window_scores(X, starts, spec.omega, pa, pb, w0, w1, -1 if band is None else int(band))
    return ivs, F


def networks_from_scores(
    nodes: Sequence[str], intervals, F: np.ndarray, sigma: float = 0.5
) -> DynamicFollowingNetwork:
    nodes = tuple(nodes)
    pa, pb = pair_index(len(nodes))
    nets = []
    for row in F:
        edges = []
        for p in np.flatnonzero(np.abs(row) >= sigma):
            e = follow_edge(nodes[pa[p]], nodes[pb[p]], float(row[p]), sigma)
            if e is not None:
                edges.append(e)
        nets.append(FollowingNetwork(nodes, tuple(edges)))
    return DynamicFollowingNetwork(nodes, tuple(intervals), tuple(nets))


def build_dynamic_network(
    ds: Dataset,
    spec: WindowSpec,
    sigma: float = 0.5,
    kernel: str = "euclidean",
    weights=None,
    band: int | None = None,
) -> DynamicFollowingNetwork:
    ivs, F = follow_scores(ds, spec, kernel, weights, band)
    return networks_from_scores(ds.ids, ivs, F, sigma)


# --------------------------------------------------------------------------
# Direction-network baseline


@dataclass(frozen=True)
class DirectionParams:
    theta_deg: float = 90.0
    eps: float = 1e-9
    fraction: float = 0.5


def direction_votes(xy: np.ndarray, params: DirectionParams = DirectionParams()) -> np.ndarray:
    """Boolean votes V[t, i, j]: at step t, i heads the same way as j and j is in front.

    Shape (T - 1, n, n). Headings are one-step displacements; individuals moving
    less than ``eps`` have no heading and neither cast nor receive votes.
    """
    h = np.diff(xy, axis=1).transpose(1, 0, 2)  # (T-1, n, 2)
    pos = xy[:, :-1].transpose(1, 0, 2)
    speed = np.linalg.norm(h, axis=2)
    moving = speed > params.eps
    dots = np.einsum("tid,tjd->tij", h, h)
    agree = dots >= np.cos(np.deg2rad(params.theta_deg)) * speed[:, :, None] * speed[:, None, :] - 1e-12
    rel = pos[:, None, :, :] - pos[:, :, None, :]  # rel[t, i, j] = pos_j - pos_i
    ahead = np.einsum("tijd,tid->tij", rel, h) > 0
    V = agree & ahead & moving[:, :, None] & moving[:, None, :]
    n = xy.shape[0]
    V[:, np.arange(n), np.arange(n)] = False
    return V


def build_direction_network(
    ds: Dataset, spec: WindowSpec, params: DirectionParams = DirectionParams()
) -> DynamicFollowingNetwork:
    """Per-window majority vote of per-step direction edges (follower -> front individual)."""
    ivs = windows(ds.T, spec)
    V = direction_votes(ds.xy, params)
    C = np.concatenate([np.zeros((1,) + V.shape[1:], dtype=np.int32), np.cumsum(V, axis=0, dtype=np.int32)])
    nsteps = V.shape[0]
    nets = []
    for s, e in ivs:
        hi = min(e - 1, nsteps)
        span = max(hi - s, 1)
        frac = (C[hi] - C[s]) / span
        edges = []
        n = ds.n
        for i in range(n):
            for j in range(i + 1, n):
                fij, fji = frac[i, j], frac[j, i]
                if fij >= params.fraction and fij > fji:
                    edges.append((ds.ids[i], ds.ids[j], float(fij)))
                elif fji >= params.fraction and fji > fij:
                    edges.append((ds.ids[j], ds.ids[i], float(fji)))
        nets.append(FollowingNetwork(ds.ids, tuple(edges)))
    return DynamicFollowingNetwork(ds.ids, tuple(ivs), tuple(nets))


# --------------------------------------------------------------------------
# export


def write_network_jsonl(dyn: DynamicFollowingNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, (net, iv) in enumerate(zip(dyn.networks, dyn.intervals)):
            rec = {
                "window_index": k,
                "interval": [int(iv[0]), int(iv[1])],
                "nodes": list(dyn.nodes),
                "edges": [{"from": a, "to": b, "weight": round(w, 12)} for a, b, w in net.edges],
            }
            fh.write(json.dumps(rec) + "\n")


def read_network_jsonl(path) -> DynamicFollowingNetwork:
    nets, ivs = [], []
    nodes: tuple[str, ...] | None = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            edges = tuple((str(e["from"]), str(e["to"]), float(e["weight"])) for e in rec["edges"])
            if "nodes" in rec:
                nodes = tuple(str(v) for v in rec["nodes"])
            elif nodes is None:
                nodes = tuple(sorted({v for e in edges for v in e[:2]}))
            nets.append(FollowingNetwork(nodes, edges))
            ivs.append(tuple(rec.get("interval", (rec["window_index"], rec["window_index"] + 1))))
    return DynamicFollowingNetwork(nodes or (), tuple(ivs), tuple(nets))


def dynamic_to_dot(dyn: DynamicFollowingNetwork) -> str:
    return "".join(net.to_dot(f"window_{k}") for k, net in enumerate(dyn.networks))


def edge_rate(dyn: Iterable[FollowingNetwork]) -> float:
    """Fraction of possible unordered pairs carrying an edge, averaged over windows."""
    rates = []
    for net in dyn:
        n = len(net.nodes)
        rates.append(len(net.edges) / (n * (n - 1) / 2))
    return float(np.mean(rates)) if rates else 0.0
