"""Frequent co-faction clusters: single linkage, k-means edge split, modularity, F1."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import id_key, sorted_ids


class MatrixNotSquare(ValueError):
    pass


class AsymmetricMatrix(ValueError):
    pass


class NotAPartition(ValueError):
    pass


@dataclass(frozen=True)
class Merge:
    a: int
    b: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merges in scipy numbering: leaves are 0..n-1, merge k creates cluster n+k."""

    labels: tuple[str, ...]
    merges: tuple[Merge, ...]

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def as_linkage(self) -> np.ndarray:
        return np.array([[m.a, m.b, m.height, m.size] for m in self.merges], dtype=float).reshape(-1, 4)


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple[frozenset, ...]

    def __post_init__(self):
        if any(not c for c in self.clusters):
            raise NotAPartition("clusters must be non-empty")
        seen: set = set()
        for c in self.clusters:
            if seen & c:
                raise NotAPartition("clusters overlap")
            seen |= c

    @classmethod
    def of(cls, groups) -> "ClusterSet":
        cs = [frozenset(str(v) for v in g) for g in groups]
        cs.sort(key=lambda c: (-len(c), id_key(sorted_ids(c)[0])))
        return cls(tuple(cs))

    @property
    def members(self) -> frozenset:
        return frozenset().union(*self.clusters) if self.clusters else frozenset()

    def __len__(self) -> int:
        return len(self.clusters)

    def to_lists(self) -> list[list[str]]:
        return [sorted_ids(c) for c in self.clusters]


def _check_square(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise MatrixNotSquare(f"expected a square matrix, got shape {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12, rtol=0):
        raise AsymmetricMatrix("support matrix must be symmetric")
    return M


def row_distances(adj, diagonal: float | None = 1.0) -> np.ndarray:
    """Euclidean distances between rows, after setting the diagonal."""
    A = _check_square(adj).copy()
    if diagonal is not None:
        np.fill_diagonal(A, diagonal)
    sq = (A * A).sum(axis=1)
    D2 = sq[:, None] + sq[None, :] - 2 * A @ A.T
    np.maximum(D2, 0, out=D2)
    D = np.sqrt(D2)
    np.fill_diagonal(D, 0.0)
    return D


def single_linkage(adj, labels=None, diagonal: float | None = 1.0) -> Dendrogram:
    """Single-linkage dendrogram of the rows of a support matrix.

    Built from the minimum spanning tree of the row-distance graph (Prim),
    whose edges sorted by weight are exactly the single-linkage merges.
    Equal heights merge in order of the smallest leaf index they join.
    """
    D = row_distances(adj, diagonal)
    n = D.shape[0]
    labels = tuple(str(v) for v in labels) if labels is not None else tuple(str(k) for k in range(n))
    if len(labels) != n:
        raise ValueError("labels do not match the matrix size")
    if n < 2:
        return Dendrogram(labels, ())

    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1)
    best[0] = 0.0
    edges = []
    for _ in range(n):
        cand = np.where(in_tree, np.inf, best)
        u = int(np.argmin(cand))
        in_tree[u] = True
        if parent[u] >= 0:
            edges.append((float(best[u]), min(u, parent[u]), max(u, parent[u])))
        closer = ~in_tree & (D[u] < best)
        best[closer] = D[u, closer]
        parent[closer] = u
    edges.sort()

    # union-find over leaves; cluster id of each root
    root = list(range(n))
    cid = list(range(n))
    size = [1] * n

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    merges = []
    for h, u, v in edges:
        ru, rv = find(u), find(v)
        a, b = sorted((cid[ru], cid[rv]))
        root[rv] = ru
        size[ru] += size[rv]
        cid[ru] = n + len(merges)
        merges.append(Merge(a, b, h, size[ru]))
    return Dendrogram(labels, tuple(merges))


def split_edges_kmeans(
    D: Dendrogram, tol: float = 1e-12, max_iter: int = 100, min_gap: float | None = 1.0
) -> tuple[list[int], list[int]]:
    """Split merge indices into (internal, external) by 1-D 2-means on heights.

    With ``min_gap`` set, a split is kept only if the gap between the lowest
    external and highest internal height exceeds ``min_gap`` times the highest
    internal height; otherwise the heights are treated as one group and every
    merge is internal. ``min_gap=None`` keeps whatever 2-means returns.
    """
    h = D.heights
    idx = list(range(h.size))
    if h.size < 2 or h.max() - h.min() <= tol:
        return idx, []
    lo, hi = h.min(), h.max()
    assign = None
    for _ in range(max_iter):
        new = np.abs(h - hi) < np.abs(h - lo)  # True -> external
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        lo, hi = h[~assign].mean(), h[assign].mean()
    if min_gap is not None:
        top_in, low_ex = h[~assign].max(), h[assign].min()
        if low_ex - top_in <= min_gap * top_in:
            return idx, []
    return [k for k in idx if not assign[k]], [k for k in idx if assign[k]]


def extract_clusters(D: Dendrogram, internal) -> ClusterSet:
    n = D.n
    root = list(range(n))

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    rep = list(range(n))  # representative leaf of every dendrogram cluster
    internal = set(internal)
    for k, m in enumerate(D.merges):
        ra, rb = rep[m.a], rep[m.b]
        rep.append(ra)
        if k in internal:
            root[find(rb)] = find(ra)
    groups: dict[int, list[str]] = {}
    for leaf in range(n):
        groups.setdefault(find(leaf), []).append(D.labels[leaf])
    return ClusterSet.of(groups.values())


def cluster_supports(
    adj, labels=None, diagonal: float = 1.0, min_gap: float | None = 1.0
) -> tuple[Dendrogram, ClusterSet]:
    D = single_linkage(adj, labels, diagonal)
    internal, _ = split_edges_kmeans(D, min_gap=min_gap)
    return D, extract_clusters(D, internal)


def modularity(adj, clusters: ClusterSet, labels) -> float:
    """Weighted modularity; self-loops are ignored."""
    A = _check_square(adj).copy()
    np.fill_diagonal(A, 0.0)
    labels = [str(v) for v in labels]
    if clusters.members != frozenset(labels) or sum(len(c) for c in clusters.clusters) != len(labels):
        raise NotAPartition("clusters must partition the node set")
    # fsum is correctly rounded, so a cluster holding every edge gets e = a = 1 exactly
    total = math.fsum(A.ravel())
    if total <= 0:
        return 0.0
    pos = {v: k for k, v in enumerate(labels)}
    Q = 0.0
    for c in clusters.clusters:
        idx = np.array([pos[v] for v in c])
        e = math.fsum(A[np.ix_(idx, idx)].ravel()) / total
        a = math.fsum(A[idx].ravel()) / total
        Q += e - a * a
    return float(Q)


@dataclass(frozen=True)
class F1Score:
    tp: int
    fp: int
    fn: int

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 1.0


def cluster_f1(predicted: ClusterSet, truth: ClusterSet) -> F1Score:
    """Greedy one-to-one matching by descending overlap.

    Ties go to the smaller truth index, then the smaller predicted index.
    An unmatched truth cluster counts all of its members as false negatives.
    """
    P, G = predicted.clusters, truth.clusters
    overlap = [[len(g & p) for p in P] for g in G]
    pairs = sorted(((-overlap[i][j], i, j) for i in range(len(G)) for j in range(len(P))))
    used_g, used_p = set(), set()
    tp = fp = fn = 0
    for neg, i, j in pairs:
        if i in used_g or j in used_p or neg == 0:
            continue
        used_g.add(i)
        used_p.add(j)
        tp += -neg
        fp += len(P[j] - G[i])
        fn += len(G[i] - P[j])
    fn += sum(len(G[i]) for i in range(len(G)) if i not in used_g)
    return F1Score(tp, fp, fn)


def clusters_to_json(clusters: ClusterSet, Q: float) -> dict:
    return {"clusters": clusters.to_lists(), "Q": Q}


def write_dendrogram_csv(D: Dendrogram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["merge", "a", "b", "height", "size"])
        for k, m in enumerate(D.merges):
            w.writerow([k, m.a, m.b, f"{m.height:.12g}", m.size])


def cluster_dot(clusters: ClusterSet, adj, labels) -> str:
    """Cluster graph; edge weight is the median support between members of two clusters."""
    A = np.asarray(adj, dtype=float)
    pos = {str(v): k for k, v in enumerate(labels)}
    lists = clusters.to_lists()
    lines = ["graph clusters {"]
    for k, c in enumerate(lists):
        lines.append(f'  C{k + 1} [label="C{k + 1} ({len(c)})"];')
    for a in range(len(lists)):
        for b in range(a + 1, len(lists)):
            ia = [pos[v] for v in lists[a]]
            ib = [pos[v] for v in lists[b]]
            med = float(np.median(A[np.ix_(ia, ib)]))
            lines.append(f"  C{a + 1} -- C{b + 1} [weight={med:.4f}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
