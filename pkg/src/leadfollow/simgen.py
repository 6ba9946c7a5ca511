"""Synthetic leadership datasets: DM, HM and IC models under two coordination scripts.

Kinematics are invented: leaders walk straight headings at constant speed,
followers steer toward a delayed point on the trail of whoever they follow,
and everyone carries a small fixed offset plus Gaussian observation noise.
Every leader segment ends with the whole group standing still for
``freeze`` steps, which keeps consecutive leadership regimes apart in time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path

import numpy as np

from .core import Dataset, ensure_dir, export_csv, from_arrays, sorted_ids

MODELS = ("DM", "HM", "IC")
DYNAMICS = ("type1", "type2")


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    model: str = "HM"
    dynamics: str = "type2"
    n: int = 30
    T: int = 4000
    events: int = 5
    event_len: int = 800
    segment_len: int = 200
    k: int | None = None
    rho: float | None = None
    seed: int = 0
    speed: float = 1.0
    hm_delay: int = 2
    delay_range: tuple[int, int] = (2, 5)
    noise: float = 0.1
    freeze: int = 40
    offset_radius: float = 0.5
    split_angle: float = 120.0
    turn_range: tuple[float, float] = (60.0, 120.0)
    catchup: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "model", str(self.model).upper())
        dyn = str(self.dynamics).lower().replace("-", "").replace("_", "")
        object.__setattr__(self, "dynamics", dyn)
        object.__setattr__(self, "delay_range", tuple(int(v) for v in self.delay_range))
        object.__setattr__(self, "turn_range", tuple(float(v) for v in self.turn_range))
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise InvalidSpec(f"model must be one of {MODELS}, got {self.model!r}")
        if self.dynamics not in DYNAMICS:
            raise InvalidSpec(f"dynamics must be one of {DYNAMICS}, got {self.dynamics!r}")
        if self.events < 1 or self.events * self.event_len > self.T:
            raise InvalidSpec("events * event_len must fit in T")
        if self.event_len != 4 * self.segment_len:
            raise InvalidSpec("an event is four leader segments")
        if not 0 <= self.freeze < self.segment_len:
            raise InvalidSpec("freeze must be shorter than a segment")
        if self.n < (7 if self.dynamics == "type1" else 4):
            raise InvalidSpec("too few individuals for the coordination script")
        if (self.model == "IC") != (self.k is not None and self.rho is not None):
            raise InvalidSpec("k and rho are required for IC and only for IC")
        if self.model == "IC" and (self.k < 1 or not 0 <= self.rho <= 1):
            raise InvalidSpec("IC needs k >= 1 and rho in [0, 1]")
        lo, hi = self.delay_range
        if self.hm_delay < 1 or lo < 1 or hi < lo:
            raise InvalidSpec("delays must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["delay_range"] = list(self.delay_range)
        d["turn_range"] = list(self.turn_range)
        return d


@dataclass(frozen=True)
class Group:
    leader: str
    members: tuple[str, ...]  # leader first, then follow order


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    groups: tuple[Group, ...]

    @property
    def leaders(self) -> frozenset:
        return frozenset(g.leader for g in self.groups)


@dataclass
class GroundTruth:
    dynamics: str
    ids: tuple[str, ...]
    states: tuple[frozenset, ...]
    A_star: np.ndarray
    cofaction: np.ndarray
    leaders: tuple[str, ...]
    leadfollow: np.ndarray  # (n followers, n leaders)
    clusters: tuple[frozenset, ...]
    leader_log: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "dynamics": self.dynamics,
            "ids": list(self.ids),
            "states": [sorted_ids(s) for s in self.states],
            "A_star": self.A_star.tolist(),
            "cofaction": self.cofaction.tolist(),
            "leaders": list(self.leaders),
            "leadfollow": self.leadfollow.tolist(),
            "clusters": [sorted_ids(c) for c in self.clusters],
        }

    @classmethod
    def from_json(cls, rec: dict) -> "GroundTruth":
        return cls(
            dynamics=rec["dynamics"],
            ids=tuple(rec["ids"]),
            states=tuple(frozenset(s) for s in rec["states"]),
            A_star=np.array(rec["A_star"], dtype=float),
            cofaction=np.array(rec["cofaction"], dtype=float),
            leaders=tuple(rec["leaders"]),
            leadfollow=np.array(rec["leadfollow"], dtype=float),
            clusters=tuple(frozenset(c) for c in rec["clusters"]),
        )


def ids_for(n: int) -> tuple[str, ...]:
    return tuple(str(k) for k in range(1, n + 1))


def split_rosters(n: int) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
    """Sub-groups led by ID3, ID4 and ID2 during a split.

    For n=30 these are {1,3,5..10}, {4,11..19}, {2,20..30}; other sizes keep
    the same 6:9:11 proportions over IDs 5..n.
    """
    rest = list(range(5, n + 1))
    m = len(rest)
    a = max(1, round(m * 6 / 26))
    b = max(1, round(m * 9 / 26))
    c1 = (1, 3, *rest[:a])
    c2 = (4, *rest[a:a + b])
    c3 = (2, *rest[a + b:])
    return tuple(tuple(str(v) for v in c) for c in (c1, c2, c3))


def hierarchy(spec: ScenarioSpec) -> tuple[str, ...]:
    """Fixed rank order of the HM model: ascending ids."""
    return ids_for(spec.n)


def _ordered(leader: str, members, ranks) -> tuple[str, ...]:
    members = set(members)
    return (leader, *(v for v in ranks if v in members and v != leader))


def script(spec: ScenarioSpec) -> list[Segment]:
    ids = ids_for(spec.n)
    R = hierarchy(spec)
    segs = []
    for e in range(spec.events):
        base = e * spec.event_len
        if spec.dynamics == "type2":
            plan = [(Group(L, _ordered(L, ids, R)),) for L in ("1", "2", "3", "4")]
        else:
            c1, c2, c3 = split_rosters(spec.n)
            plan = [
                (Group("1", _ordered("1", ids, R)),),
                (Group("3", _ordered("3", c1, R)), Group("4", _ordered("4", c2, R)), Group("2", _ordered("2", c3, R))),
                (Group("3", _ordered("3", ids, R)),),
                (Group("4", _ordered("4", ids, R)),),
            ]
        for s, groups in enumerate(plan):
            start = base + s * spec.segment_len
            segs.append(Segment(start, start + spec.segment_len, groups))
    return segs


def _unit(angle: float) -> np.ndarray:
    return np.array([np.cos(angle), np.sin(angle)])


def simulate(spec: ScenarioSpec) -> tuple[Dataset, GroundTruth]:
    """Generate one dataset and its ground truth; deterministic given ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    ids = ids_for(spec.n)
    pos = {v: k for k, v in enumerate(ids)}
    n, T = spec.n, spec.T

    r = spec.offset_radius * np.sqrt(rng.random(n))
    ang = rng.uniform(0, 2 * np.pi, n)
    offsets = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    lo, hi = spec.delay_range
    direct_delay = rng.integers(lo, hi + 1, size=n)

    segs = script(spec)
    hist = np.zeros((T, n, 2))
    p = np.zeros((n, 2))
    start = p.copy()
    leader_log: list[frozenset] = [frozenset()] * T
    vmax = spec.catchup * spec.speed
    active = np.ones(n, dtype=bool)
    attempted: set[tuple[int, int]] = set()

    heading = rng.uniform(0, 2 * np.pi)
    for si, seg in enumerate(segs):
        if spec.model == "IC" and si % 4 == 0:
            active = rng.random(n) < spec.rho
            attempted = set()
        for L in seg.leaders:
            active[pos[L]] = True

        moving = spec.segment_len - spec.freeze
        # turn sideways off the previous heading so the new leader walks away from the trail
        turn = np.deg2rad(rng.uniform(*spec.turn_range)) * rng.choice((-1.0, 1.0))
        heading = heading + turn
        base = heading
        pred = np.full(n, -1)
        delay = np.zeros(n, dtype=np.int64)
        lead_dir = {}
        for g, grp in enumerate(seg.groups):
            lead_dir[pos[grp.leader]] = base + np.deg2rad(spec.split_angle) * g
            chain = [pos[v] for v in grp.members]
            for rank, k in enumerate(chain[1:], start=1):
                if spec.model == "HM":
                    pred[k] = chain[rank - 1]
                    delay[k] = spec.hm_delay
                else:
                    pred[k] = chain[0]
                    delay[k] = direct_delay[k]
        split = len(seg.groups) > 1
        followers = np.flatnonzero(pred >= 0)

        for t in range(seg.start, min(seg.end, T)):
            leader_log[t] = seg.leaders
            local = t - seg.start
            if local < moving:
                if spec.model == "IC":
                    _cascade(p, active, attempted, spec, rng)
                for k, a in lead_dir.items():
                    back = np.pi if split and local >= moving // 2 else 0.0
                    p[k] = p[k] + spec.speed * _unit(a + back)
                back_t = t - delay[followers]
                # before the first step everyone is still at the start
                past = np.where(
                    (back_t >= 0)[:, None], hist[np.maximum(back_t, 0), pred[followers]], start[pred[followers]]
                )
                step = past - p[followers]
                norm = np.linalg.norm(step, axis=1, keepdims=True)
                scale = np.minimum(1.0, vmax / np.maximum(norm, 1e-12))
                move = step * scale
                if spec.model == "IC":
                    move[~active[followers]] = 0.0
                p[followers] = p[followers] + move
            hist[t] = p
    if segs and segs[-1].end < T:
        hist[segs[-1].end:] = hist[segs[-1].end - 1]

    xy = hist + offsets[None, :, :] + rng.normal(0.0, spec.noise, size=hist.shape)
    xy = np.transpose(xy, (1, 0, 2))
    ds = from_arrays(ids, xy, meta={"scenario": spec.to_json()})
    gt = ground_truth(spec)
    gt.leader_log = leader_log
    return ds, gt


def _cascade(p, active, attempted, spec: ScenarioSpec, rng) -> None:
    """One activation round: every active individual tries its k nearest inactive ones."""
    inactive = np.flatnonzero(~active)
    if inactive.size == 0:
        return
    newly = []
    for i in np.flatnonzero(active):
        d = np.linalg.norm(p[inactive] - p[i], axis=1)
        for j in inactive[np.argsort(d, kind="stable")[: spec.k]]:
            if (i, j) in attempted:
                continue
            attempted.add((i, j))
            if rng.random() < spec.rho:
                newly.append(j)
    active[newly] = True


def ground_truth(spec: ScenarioSpec) -> GroundTruth:
    ids = ids_for(spec.n)
    pos = {v: k for k, v in enumerate(ids)}
    n = spec.n
    leaders = ("1", "2", "3", "4")
    A = np.zeros((4, 4))
    for a in range(4):
        A[a, (a + 1) % 4] = 1.0
    LF = np.zeros((n, 4))
    if spec.dynamics == "type2":
        states = tuple(frozenset({v}) for v in leaders)
        co = np.ones((n, n))
        LF[:] = 0.25
        clusters = (frozenset(ids),)
    else:
        states = (frozenset({"1"}), frozenset({"2", "3", "4"}), frozenset({"3"}), frozenset({"4"}))
        c1, c2, c3 = split_rosters(n)
        clusters = (frozenset(c1), frozenset(c2), frozenset(c3))
        label = np.zeros(n, dtype=int)
        for c, members in enumerate(clusters):
            for v in members:
                label[pos[v]] = c
        co = np.where(label[:, None] == label[None, :], 1.0, 0.75)
        LF[:, 0] = 0.25
        LF[:, 1] = np.where(label == 2, 0.25, 0.0)
        LF[:, 2] = np.where(label == 0, 0.5, 0.25)
        LF[:, 3] = np.where(label == 1, 0.5, 0.25)
    np.fill_diagonal(co, 0.0)
    return GroundTruth(spec.dynamics, ids, states, A, co, leaders, LF, clusters)


def write_scenario(ds: Dataset, gt: GroundTruth, out_dir, stem: str = "dataset") -> tuple[Path, Path]:
    out = ensure_dir(out_dir)
    csv_path = out / f"{stem}.csv"
    gt_path = out / f"{stem}.truth.json"
    export_csv(ds, csv_path)
    rec = gt.to_json()
    rec["scenario"] = ds.meta.get("scenario")
    gt_path.write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")
    return csv_path, gt_path


def read_truth(path) -> GroundTruth:
    return GroundTruth.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def replica_seeds(seed: int, replicas: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(replicas, dtype=np.uint32)]


def simulate_batch(spec: ScenarioSpec, replicas: int, seed: int, out_dir) -> Path:
    """Write ``replicas`` datasets plus a manifest listing files and seeds."""
    out = ensure_dir(out_dir)
    entries = []
    for r, s in enumerate(replica_seeds(seed, replicas)):
        ds, gt = simulate(replace(spec, seed=s))
        stem = f"{spec.model}_{spec.dynamics}_{r:03d}"
        csv_path, gt_path = write_scenario(ds, gt, out, stem)
        entries.append({"replica": r, "seed": s, "data": csv_path.name, "truth": gt_path.name})
    manifest = out / "manifest.json"
    rec = {"master_seed": seed, "scenario": spec.to_json(), "replicas": entries}
    manifest.write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")
    return manifest
