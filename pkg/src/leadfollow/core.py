"""Trajectory data model, CSV ingestion/export and sliding windows."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Base class for malformed input data."""


class MissingColumn(DataError):
    pass


class RaggedLengths(DataError):
    pass


class NonMonotoneTime(DataError):
    pass


class NonNumericCoordinate(DataError):
    pass


class OmegaExceedsLength(DataError):
    pass


class InvalidWindowSpec(DataError):
    pass


_NUM_RE = re.compile(r"(\d+)")


def id_key(label) -> tuple:
    """Natural sort key so that "2" < "10" and "ID2" < "ID10"."""
    parts = _NUM_RE.split(str(label))
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p != "")


def sorted_ids(labels: Iterable) -> list[str]:
    return sorted((str(x) for x in labels), key=id_key)


@dataclass(frozen=True)
class Trajectory:
    id: str
    t: np.ndarray
    xy: np.ndarray  # shape (T, 2)

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class Dataset:
    """n equal-length 2-D trajectories on a shared integer time base.

    ``xy`` has shape (n, T, 2); row k belongs to ``ids[k]``.
    """

    ids: tuple[str, ...]
    t: np.ndarray
    xy: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ids) < 2:
            raise DataError("a dataset needs at least two individuals")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("individual ids must be unique")
        if self.xy.ndim != 3 or self.xy.shape[0] != len(self.ids) or self.xy.shape[2] != 2:
            raise DataError(f"xy must have shape (n, T, 2), got {self.xy.shape}")
        if self.xy.shape[1] != len(self.t):
            raise RaggedLengths("time base and trajectories differ in length")
        if len(self.t) > 1 and np.any(np.diff(self.t) != 1):
            raise NonMonotoneTime("time steps must be strictly increasing with unit stride")
        self.xy.setflags(write=False)
        self.t.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def T(self) -> int:
        return len(self.t)

    @property
    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(i, self.t, self.xy[k]) for k, i in enumerate(self.ids)]

    def index_of(self, label) -> int:
        return self.ids.index(str(label))


@dataclass(frozen=True)
class WindowSpec:
    omega: int
    delta: int | None = None

    def __post_init__(self):
        if self.delta is None:
            object.__setattr__(self, "delta", max(1, int(round(0.1 * self.omega))))
        if self.omega < 1 or self.delta < 1 or self.delta > self.omega:
            raise InvalidWindowSpec(f"need 1 <= delta <= omega, got omega={self.omega} delta={self.delta}")


def windows(T: int, spec: WindowSpec) -> list[tuple[int, int]]:
    """Half-open intervals [start, start + omega) sliding by delta.

    Windows that would run past ``T`` are dropped rather than truncated.
    """
    if spec.omega > T:
        raise OmegaExceedsLength(f"omega={spec.omega} exceeds series length T={T}")
    count = (T - spec.omega) // spec.delta + 1
    return [(k * spec.delta, k * spec.delta + spec.omega) for k in range(count)]


def ingest_csv(
    path,
    schema: dict | None = None,
    interpolate: bool = False,
    meta: dict | None = None,
) -> Dataset:
    """Read an ``id,t,x,y`` CSV into a Dataset.

    ``schema`` maps the logical names (id, t, x, y) to the file's column names.
    With ``interpolate`` set, missing interior time steps are linearly filled
    instead of rejected.
    """
    cols = {"id": "id", "t": "t", "x": "x", "y": "y"}
    if schema:
        cols.update({k: v for k, v in schema.items() if v})
    rows: dict[str, list[tuple[int, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key, name in cols.items():
            if name not in header:
                raise MissingColumn(f"column {name!r} (for {key}) not in header {header}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                t = int(float(rec[cols["t"]]))
            except (TypeError, ValueError):
                raise NonMonotoneTime(f"line {lineno}: non-integer time {rec[cols['t']]!r}")
            try:
                x = float(rec[cols["x"]])
                y = float(rec[cols["y"]])
            except (TypeError, ValueError):
                raise NonNumericCoordinate(f"line {lineno}: non-numeric coordinate")
            if not (np.isfinite(x) and np.isfinite(y)):
                raise NonNumericCoordinate(f"line {lineno}: non-finite coordinate")
            rows.setdefault(str(rec[cols["id"]]), []).append((t, x, y))
    if not rows:
        raise DataError(f"{path}: no data rows")

    ids = sorted_ids(rows)
    series = {}
    for i in ids:
        recs = sorted(rows[i])
        ts = np.array([r[0] for r in recs], dtype=np.int64)
        if np.any(np.diff(ts) <= 0):
            raise NonMonotoneTime(f"id {i}: duplicated time steps")
        xy = np.array([(r[1], r[2]) for r in recs], dtype=float)
        if np.any(np.diff(ts) != 1):
            if not interpolate:
                raise NonMonotoneTime(f"id {i}: gaps in time steps")
            full = np.arange(ts[0], ts[-1] + 1)
            xy = np.column_stack([np.interp(full, ts, xy[:, 0]), np.interp(full, ts, xy[:, 1])])
            ts = full
        series[i] = (ts, xy)

    lengths = {len(s[0]) for s in series.values()}
    starts = {int(s[0][0]) for s in series.values()}
    if len(lengths) != 1 or len(starts) != 1:
        raise RaggedLengths(f"trajectories differ in length or time base: lengths={sorted(lengths)}")
    t = series[ids[0]][0]
    xy = np.stack([series[i][1] for i in ids])
    m = {"source": str(path)}
    if meta:
        m.update(meta)
    return Dataset(tuple(ids), t.copy(), xy, m)


def export_csv(ds: Dataset, path, schema: dict | None = None) -> None:
    """Write the dataset with deterministic row order (id, then t)."""
    cols = {"id": "id", "t": "t", "x": "x", "y": "y"}
    if schema:
        cols.update({k: v for k, v in schema.items() if v})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([cols["id"], cols["t"], cols["x"], cols["y"]])
        for k, i in enumerate(ds.ids):
            for tt, (x, y) in zip(ds.t, ds.xy[k]):
                w.writerow([i, int(tt), repr(float(x)), repr(float(y))])


def from_arrays(ids: Sequence, xy: np.ndarray, t0: int = 0, meta: dict | None = None) -> Dataset:
    xy = np.asarray(xy, dtype=float)
    t = np.arange(t0, t0 + xy.shape[1], dtype=np.int64)
    return Dataset(tuple(str(i) for i in ids), t, xy.copy(), dict(meta or {}))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
