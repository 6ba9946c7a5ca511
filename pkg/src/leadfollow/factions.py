"""Faction initiators, faction membership and the leader/faction time series."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass

from .core import id_key, sorted_ids
from .following import DynamicFollowingNetwork, FollowingNetwork


@dataclass(frozen=True)
class Faction:
    initiator: str
    members: frozenset

    def __post_init__(self):
        if self.initiator not in self.members:
            raise ValueError("a faction contains its initiator")


LeaderSet = frozenset


@dataclass(frozen=True)
class LeaderSeries:
    entries: tuple[frozenset, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class FactionSeries:
    nodes: tuple[str, ...]
    entries: tuple[tuple[Faction, ...], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __iter__(self):
        return iter(self.entries)


def find_initiators(G: FollowingNetwork) -> set[str]:
    """Nodes with out-degree zero and positive in-degree."""
    out_deg = G.out_degree()
    in_deg = G.in_degree()
    return {v for v in G.nodes if out_deg[v] == 0 and in_deg[v] > 0}


def assign_factions(G: FollowingNetwork) -> tuple[Faction, ...]:
    """Partition every node that reaches an initiator into exactly one faction.

    A node reaching several initiators goes to the one with the fewest hops;
    among equally short paths the larger summed edge weight wins, then the
    smaller initiator id.
    """
    leaders = sorted_ids(find_initiators(G))
    if not leaders:
        return ()
    incoming = defaultdict(list)  # followed -> [(follower, weight)]
    for a, b, w in G.edges:
        incoming[b].append((a, w))

    best: dict[str, tuple] = {}
    for L in leaders:
        dist = {L: 0}
        weight = {L: 0.0}
        frontier = [L]
        d = 0
        while frontier:
            d += 1
            nxt = {}
            for u in frontier:
                for v, w in incoming[u]:
                    if v in dist:
                        continue
                    cand = weight[u] + w
                    if v not in nxt or cand > nxt[v]:
                        nxt[v] = cand
            for v, w in nxt.items():
                dist[v] = d
                weight[v] = w
            frontier = sorted_ids(nxt)
        for v in dist:
            key = (dist[v], -weight[v], id_key(L))
            if v not in best or key < best[v][0]:
                best[v] = (key, L)

    members = defaultdict(set)
    for v, (_, L) in best.items():
        members[L].add(v)
    return tuple(Faction(L, frozenset(members[L])) for L in leaders)


def leader_series(dyn: DynamicFollowingNetwork) -> tuple[LeaderSeries, FactionSeries]:
    leaders, factions = [], []
    for G in dyn:
        fs = assign_factions(G)
        factions.append(fs)
        leaders.append(frozenset(f.initiator for f in fs))
    return LeaderSeries(tuple(leaders)), FactionSeries(tuple(dyn.nodes), tuple(factions))


def format_set(s) -> str:
    return "{" + ",".join(sorted_ids(s)) + "}"


def write_leaders_jsonl(L: LeaderSeries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, s in enumerate(L):
            fh.write(json.dumps({"window_index": k, "leaders": sorted_ids(s)}) + "\n")


def read_leaders_jsonl(path) -> LeaderSeries:
    recs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                recs.append(json.loads(line))
    recs.sort(key=lambda r: r["window_index"])
    return LeaderSeries(tuple(frozenset(str(x) for x in r["leaders"]) for r in recs))


def write_factions_jsonl(F: FactionSeries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, fs in enumerate(F):
            rec = {
                "window_index": k,
                "nodes": list(F.nodes),
                "factions": [{"initiator": f.initiator, "members": sorted_ids(f.members)} for f in fs],
            }
            fh.write(json.dumps(rec) + "\n")


def read_factions_jsonl(path) -> FactionSeries:
    recs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                recs.append(json.loads(line))
    recs.sort(key=lambda r: r["window_index"])
    nodes: set[str] = set()
    entries = []
    for r in recs:
        nodes.update(str(v) for v in r.get("nodes", ()))
        fs = []
        for f in r["factions"]:
            mem = frozenset(str(m) for m in f["members"])
            nodes.update(mem)
            fs.append(Faction(str(f["initiator"]), mem))
        entries.append(tuple(fs))
    return FactionSeries(tuple(sorted_ids(nodes)), tuple(entries))
