"""Null models for the leadership diagram and the three two-sample tests.

The test statistics are computed here; scipy only supplies the limiting
distributions (Kolmogorov, normal, chi-square).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import special, stats

from .dynamics import (
    DynamicsDiagram,
    EncodedSeries,
    encode_states,
    fit_diagram,
    leader_set_supports,
    mine_frequent_sets,
    mine_sequences,
)
from .factions import LeaderSeries

log = logging.getLogger(__name__)

TESTS = ("ks", "ranksum", "kruskal")


class EmptySample(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    p_value: float
    alpha: float = 0.01

    @property
    def rejected(self) -> bool:
        return self.p_value < self.alpha


def _sample(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("samples must be non-empty")
    return x


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov


def ks_statistic(x, y) -> float:
    x, y = np.sort(_sample(x)), np.sort(_sample(y))
    pts = np.concatenate([x, y])
    fx = np.searchsorted(x, pts, side="right") / x.size
    fy = np.searchsorted(y, pts, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def ks_test(x, y, alpha: float = 0.01) -> TestResult:
    """Two-sample KS with the asymptotic Kolmogorov p-value."""
    x, y = _sample(x), _sample(y)
    D = ks_statistic(x, y)
    en = np.sqrt(x.size * y.size / (x.size + y.size))
    p = float(special.kolmogorov(D * en)) if D > 0 else 1.0
    return TestResult(D, min(max(p, 0.0), 1.0), alpha)


# --------------------------------------------------------------------------
# Wilcoxon rank sum


def _exact_ranksum_p(ranks: np.ndarray, n1: int, w_obs: float) -> float:
    # Work in doubled ranks so midranks stay integral.
    r2 = np.rint(2 * ranks).astype(np.int64)
    total = int(r2.sum())
    # ways[k][s]: number of k-subsets with doubled rank sum s
    ways = np.zeros((n1 + 1, total + 1))
    ways[0, 0] = 1
    for r in r2:
        for k in range(n1, 0, -1):
            ways[k, r:] = ways[k, r:] + ways[k - 1, : total + 1 - r]
    dist = ways[n1].copy()
    dist /= dist.sum()
    w2 = int(round(2 * w_obs))
    lo = dist[: w2 + 1].sum()
    hi = dist[w2:].sum()
    return float(min(1.0, 2 * min(lo, hi)))


def ranksum_test(x, y, alpha: float = 0.01, method: str = "auto") -> TestResult:
    """Wilcoxon rank-sum test; the statistic is Mann-Whitney U of ``x``.

    ``method="auto"`` enumerates the exact null distribution when both samples
    have at most 10 values and otherwise uses the normal approximation with
    tie and continuity corrections.
    """
    x, y = _sample(x), _sample(y)
    n1, n2 = x.size, y.size
    N = n1 + n2
    ranks = stats.rankdata(np.concatenate([x, y]))
    W = ranks[:n1].sum()
    U = W - n1 * (n1 + 1) / 2
    if method == "auto":
        method = "exact" if max(n1, n2) <= 10 else "asymptotic"
    if method == "exact":
        p = _exact_ranksum_p(ranks, n1, W)
    elif method == "asymptotic":
        _, counts = np.unique(ranks, return_counts=True)
        tie = (counts**3 - counts).sum()
        var = n1 * n2 / 12.0 * ((N + 1) - tie / (N * (N - 1))) if N > 1 else 0.0
        if var <= 0:
            p = 1.0
        else:
            mu = n1 * (N + 1) / 2.0
            z = max(abs(W - mu) - 0.5, 0.0) / np.sqrt(var)
            p = float(min(1.0, 2 * stats.norm.sf(z)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return TestResult(float(U), p, alpha)


# --------------------------------------------------------------------------
# Kruskal-Wallis


def kruskal_wallis_test(groups, alpha: float = 0.01) -> TestResult:
    groups = [_sample(g) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    allv = np.concatenate(groups)
    N = allv.size
    ranks = stats.rankdata(allv)
    H, start = 0.0, 0
    for g in groups:
        r = ranks[start:start + g.size]
        H += r.sum() ** 2 / g.size
        start += g.size
    H = 12.0 / (N * (N + 1)) * H - 3 * (N + 1)
    _, counts = np.unique(allv, return_counts=True)
    corr = 1 - (counts**3 - counts).sum() / (N**3 - N) if N > 1 else 0.0
    if corr <= 0:
        return TestResult(0.0, 1.0, alpha)
    H = max(H / corr, 0.0)
    return TestResult(float(H), float(stats.chi2.sf(H, len(groups) - 1)), alpha)


def run_tests(x, y, alpha: float = 0.01) -> dict[str, TestResult]:
    return {
        "ks": ks_test(x, y, alpha),
        "ranksum": ranksum_test(x, y, alpha),
        "kruskal": kruskal_wallis_test([x, y], alpha),
    }


# --------------------------------------------------------------------------
# null models


def permute_leader_series(L: LeaderSeries, rng: np.random.Generator) -> LeaderSeries:
    entries = list(L)
    perm = rng.permutation(len(entries))
    return LeaderSeries(tuple(entries[k] for k in perm))


def rewire_diagram(T: DynamicsDiagram, rng: np.random.Generator) -> DynamicsDiagram:
    """Move the head of every edge to a uniformly drawn node other than its tail.

    Heads leaving the same tail are drawn without replacement, so no parallel
    edges arise and the weight multiset and out-degrees are kept.
    """
    m = T.n
    if m < 2:
        raise ValueError("rewiring needs at least two nodes")
    out = np.zeros_like(T.A_star)
    for i in range(m):
        heads = np.flatnonzero(T.A_star[i] > 0)
        heads = heads[heads != i]
        if heads.size == 0:
            continue
        others = np.array([k for k in range(m) if k != i])
        new = rng.choice(others, size=heads.size, replace=False)
        out[i, new] = T.A_star[i, heads]
    return DynamicsDiagram(T.states, T.supports, out, None, None)


def diagram_from_leaders(L, phi: float = 0.01) -> tuple[DynamicsDiagram, EncodedSeries]:
    freq = mine_frequent_sets(L, phi)
    enc = encode_states(L, freq)
    return fit_diagram(enc, leader_set_supports(L)), enc


# --------------------------------------------------------------------------
# protocol


@dataclass
class RejectionReport:
    kind: str
    R: int
    alpha: float
    per_test_rates: dict
    joint_rate: float
    seeds: list
    master_seed: int
    calibrate: bool = False
    skipped: int = 0
    p_values: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("p_values")
        return d

    def summary(self) -> str:
        rates = "  ".join(f"{k}={v:.2f}" for k, v in self.per_test_rates.items())
        tag = " (calibration)" if self.calibrate else ""
        return f"{self.kind}{tag}: R={self.R} alpha={self.alpha} joint={self.joint_rate:.2f}  {rates}"


def derive_seeds(master_seed: int, R: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(R, dtype=np.uint32)]


def significance_protocol(
    kind: str,
    leaders: LeaderSeries | None = None,
    diagram: DynamicsDiagram | None = None,
    encoded: EncodedSeries | None = None,
    R: int = 100,
    alpha: float = 0.01,
    seed: int = 0,
    phi: float = 0.01,
    calibrate: bool = False,
) -> RejectionReport:
    """Repeat the null-model comparison ``R`` times and report rejection rates.

    ``kind="edge-weight"`` needs ``leaders``: the observed diagram's edge
    weights are compared with those of a diagram refit on a permuted series.
    ``kind="sequence-support"`` needs ``diagram`` and ``encoded``: supports of
    the mined sequences are compared with those mined from a rewired diagram.
    With ``calibrate`` the observed side is itself replaced by an independent
    null draw, so rejections estimate the false-positive rate.
    """
    if kind not in ("edge-weight", "sequence-support"):
        raise ValueError(f"unknown kind {kind!r}")
    seeds = derive_seeds(seed, R)
    log.info("significance protocol kind=%s R=%d seed=%d", kind, R, seed)

    if kind == "edge-weight":
        if leaders is None:
            raise ValueError("edge-weight protocol needs the leader series")
        observed, _ = diagram_from_leaders(leaders, phi)

        def draw(rng):
            return diagram_from_leaders(permute_leader_series(leaders, rng), phi)[0].edge_weights()

        obs_sample = observed.edge_weights()
    else:
        if diagram is None or encoded is None:
            raise ValueError("sequence-support protocol needs a diagram and the encoded series")

        def draw(rng):
            return mine_sequences(rewire_diagram(diagram, rng), encoded).supports()

        obs_sample = mine_sequences(diagram, encoded).supports()

    rej = {k: 0 for k in TESTS}
    joint = 0
    done = 0
    skipped = 0
    pvals = {k: [] for k in TESTS}
    for s in seeds:
        rng = np.random.default_rng(s)
        x = draw(rng) if calibrate else obs_sample
        y = draw(rng)
        if x.size == 0 or y.size == 0:
            skipped += 1
            continue
        res = run_tests(x, y, alpha)
        done += 1
        for k, r in res.items():
            rej[k] += r.rejected
            pvals[k].append(r.p_value)
        joint += all(r.rejected for r in res.values())
    denom = max(done, 1)
    return RejectionReport(
        kind=kind,
        R=R,
        alpha=alpha,
        per_test_rates={k: rej[k] / denom for k in TESTS},
        joint_rate=joint / denom,
        seeds=seeds,
        master_seed=seed,
        calibrate=calibrate,
        skipped=skipped,
        p_values=pvals,
    )

