"""Trajectory data model, CSV ingestion, preprocessing and segment weights."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from vfkm.errors import (
    InvalidArgumentError,
    MalformedTrajectoryError,
    OutOfDomainError,
    ParseError,
)
from vfkm.grid import Grid

REQUIRED_COLUMNS = ("id", "t", "x", "y")


@dataclass(frozen=True, eq=False)
class Trajectory:
    id: str
    points: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        t = np.asarray(self.times, dtype=float).ravel()
        if len(pts) != len(t):
            raise MalformedTrajectoryError(f"trajectory {self.id!r}: points and times differ in length")
        if len(t) < 2:
            raise MalformedTrajectoryError(f"trajectory {self.id!r}: needs at least 2 samples")
        if not (np.isfinite(pts).all() and np.isfinite(t).all()):
            raise MalformedTrajectoryError(f"trajectory {self.id!r}: non-finite sample")
        if not (np.diff(t) > 0).all():
            raise MalformedTrajectoryError(f"trajectory {self.id!r}: times must be strictly increasing")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.times)

    @property
    def timespan(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.id == other.id and np.array_equal(self.points, other.points)
                and np.array_equal(self.times, other.times))

    __hash__ = None


@dataclass
class TrajectorySet:
    trajectories: list[Trajectory]
    dropped: Counter = field(default_factory=Counter)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [tr.id for tr in self.trajectories]
        if len(set(ids)) != len(ids):
            raise MalformedTrajectoryError("trajectory ids must be unique")

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    @property
    def ids(self) -> list[str]:
        return [tr.id for tr in self.trajectories]

    @property
    def total_time(self) -> float:
        return math.fsum(tr.timespan for tr in self.trajectories)

    def all_points(self) -> np.ndarray:
        return np.concatenate([tr.points for tr in self.trajectories])

    def subset(self, indices) -> "TrajectorySet":
        return TrajectorySet([self.trajectories[i] for i in indices], metadata=dict(self.metadata))


def parse_trajectories(stream) -> TrajectorySet:
    """Read ``id,t,x,y`` records (header required, extra columns ignored).

    Records are grouped by id in first-appearance order and sorted by time.
    Ids with fewer than two samples are dropped and counted in ``dropped``.
    Comment lines of the form ``# key=value ...`` are collected in ``metadata``.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    metadata = {}
    header = None
    cols = None
    groups: dict[str, list[tuple[float, float, float, int]]] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if "=" in token:
                    key, _, value = token.partition("=")
                    metadata[key] = value
            continue
        row = next(csv.reader([line]))
        if header is None:
            header = [c.strip() for c in row]
            missing = [c for c in REQUIRED_COLUMNS if c not in header]
            if missing:
                raise ParseError(f"header is missing column(s) {', '.join(missing)}", lineno)
            cols = [header.index(c) for c in REQUIRED_COLUMNS]
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        tid = row[cols[0]].strip()
        if not tid:
            raise ParseError("empty trajectory id", lineno)
        try:
            t, x, y = (float(row[c]) for c in cols[1:])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
            raise ParseError("non-finite value", lineno)
        groups.setdefault(tid, []).append((t, x, y, lineno))
    if header is None:
        raise ParseError("missing header line")

    trajectories = []
    dropped = Counter()
    for tid, recs in groups.items():
        recs.sort(key=lambda r: r[0])
        for a, b in zip(recs, recs[1:]):
            if a[0] == b[0]:
                raise MalformedTrajectoryError(
                    f"trajectory {tid!r}: duplicate timestamp {a[0]!r} (lines {a[3]} and {b[3]})"
                )
        if len(recs) < 2:
            dropped["single_sample"] += 1
            continue
        arr = np.array([r[:3] for r in recs])
        trajectories.append(Trajectory(tid, arr[:, 1:3], arr[:, 0]))
    return TrajectorySet(trajectories, dropped, metadata)


def read_trajectories(path) -> TrajectorySet:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trajectories(fh)


def write_trajectories(trajs: Iterable[Trajectory], stream, labels=None, comments=()):
    for c in comments:
        stream.write(f"# {c}\n")
    stream.write("id,t,x,y" + (",label" if labels is not None else "") + "\n")
    for n, tr in enumerate(trajs):
        for (x, y), t in zip(tr.points, tr.times):
            line = f"{tr.id},{float(t)!r},{float(x)!r},{float(y)!r}"
            if labels is not None:
                line += f",{labels[n]}"
            stream.write(line + "\n")


def split_on_gaps(traj: Trajectory, factor: float = 2.5) -> list[Trajectory]:
    """Cut ``traj`` wherever a sample gap exceeds ``factor`` times its median gap.

    Pieces with fewer than two samples are discarded. Pieces are renamed
    ``<id>#<piece>``; an uncut trajectory is returned as is.
    """
    if factor <= 0:
        raise InvalidArgumentError("gap factor must be positive")
    gaps = np.diff(traj.times)
    cuts = np.flatnonzero(gaps > factor * np.median(gaps)) + 1
    if len(cuts) == 0:
        return [traj]
    pieces = []
    for n, (a, b) in enumerate(zip(np.r_[0, cuts], np.r_[cuts, len(traj)])):
        if b - a >= 2:
            pieces.append(Trajectory(f"{traj.id}#{n}", traj.points[a:b], traj.times[a:b]))
    return pieces


def resample_min_interval(traj: Trajectory, min_dt: float) -> Trajectory | None:
    """Keep samples at least ``min_dt`` apart (greedy, forward); the last sample is always kept.

    Returns ``None`` when fewer than two samples survive.
    """
    if not min_dt > 0:
        raise InvalidArgumentError("min_dt must be positive")
    keep = [0]
    for i in range(1, len(traj) - 1):
        if traj.times[i] - traj.times[keep[-1]] >= min_dt:
            keep.append(i)
    last = len(traj) - 1
    if keep[-1] != last:
        keep.append(last)
    if len(keep) < 2:
        return None
    if len(keep) == len(traj):
        return traj
    return Trajectory(traj.id, traj.points[keep], traj.times[keep])


def preprocess(tset: TrajectorySet, split_factor: float | None = None,
               resample_dt: float | None = None) -> TrajectorySet:
    """Gap splitting followed by resampling; every drop is counted in ``dropped``."""
    dropped = Counter(tset.dropped)
    out = list(tset)
    if split_factor is not None:
        pieces = []
        for tr in out:
            parts = split_on_gaps(tr, split_factor)
            kept = sum(len(p) for p in parts)
            if kept < len(tr):
                dropped["gap_split_samples"] += len(tr) - kept
            pieces.extend(parts)
        out = pieces
    if resample_dt is not None:
        resampled = []
        for tr in out:
            r = resample_min_interval(tr, resample_dt)
            if r is None:
                dropped["resample_short"] += 1
            else:
                resampled.append(r)
        out = resampled
    return TrajectorySet(out, dropped, dict(tset.metadata))


class Segment(NamedTuple):
    trajectory: str
    p0: tuple[float, float]
    t0: float
    p1: tuple[float, float]
    t1: float
    velocity: tuple[float, float]
    weight: float
    triangle: int


@dataclass(eq=False)
class SegmentSet:
    """Tessellated segments of a trajectory set, stored column-wise.

    ``weight`` holds the per-segment duration share of the total timespan of
    the set the segments were built from.
    """
    grid: Grid
    traj_ids: list[str]
    traj_index: np.ndarray
    triangle: np.ndarray
    verts: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    velocity: np.ndarray
    weight: np.ndarray
    total_time: float

    def __len__(self):
        return len(self.weight)

    @property
    def n_trajectories(self) -> int:
        return len(self.traj_ids)

    def per_trajectory(self, values) -> np.ndarray:
        """Sum per-segment values (1-D or (m, k)) over each trajectory."""
        values = np.asarray(values, dtype=float)
        n = self.n_trajectories
        if values.ndim == 1:
            return np.bincount(self.traj_index, weights=values, minlength=n)
        return np.column_stack([
            np.bincount(self.traj_index, weights=values[:, j], minlength=n)
            for j in range(values.shape[1])
        ]).reshape(n, values.shape[1])

    @property
    def trajectory_weight(self) -> np.ndarray:
        return self.per_trajectory(self.weight)

    def segment(self, j: int) -> Segment:
        return Segment(
            self.traj_ids[self.traj_index[j]],
            tuple(self.p0[j]), float(self.t0[j]),
            tuple(self.p1[j]), float(self.t1[j]),
            tuple(self.velocity[j]), float(self.weight[j]), int(self.triangle[j]),
        )

    def segment_indices(self, traj_indices) -> np.ndarray:
        mask = np.zeros(self.n_trajectories, dtype=bool)
        mask[np.asarray(traj_indices, dtype=np.int64)] = True
        return np.flatnonzero(mask[self.traj_index])

    def subset(self, traj_indices) -> "SegmentSet":
        """Segments of the given trajectories; weights are kept, not renormalized."""
        traj_indices = np.asarray(traj_indices, dtype=np.int64)
        remap = np.full(self.n_trajectories, -1, dtype=np.int64)
        remap[traj_indices] = np.arange(len(traj_indices))
        sel = self.segment_indices(traj_indices)
        return SegmentSet(
            self.grid, [self.traj_ids[i] for i in traj_indices], remap[self.traj_index[sel]],
            self.triangle[sel], self.verts[sel], self.w0[sel], self.w1[sel],
            self.p0[sel], self.p1[sel], self.t0[sel], self.t1[sel],
            self.velocity[sel], self.weight[sel], self.total_time,
        )


def build_segments(tset: TrajectorySet, grid: Grid) -> SegmentSet:
    """Tessellate every trajectory against ``grid`` and compute segment weights."""
    if len(tset) == 0:
        raise InvalidArgumentError("empty trajectory set")
    total = tset.total_time
    if not total > 0:
        raise MalformedTrajectoryError("total timespan must be positive")
    cols = {k: [] for k in ("traj", "p0", "p1", "t0", "t1", "vel")}
    for n, tr in enumerate(tset):
        try:
            pts, ts, parent = grid.tessellate(tr.points, tr.times)
        except OutOfDomainError as exc:
            raise OutOfDomainError(f"trajectory {tr.id!r}: {exc}") from None
        vel = np.diff(tr.points, axis=0) / np.diff(tr.times)[:, None]
        cols["traj"].append(np.full(len(parent), n, dtype=np.int64))
        cols["p0"].append(pts[:-1])
        cols["p1"].append(pts[1:])
        cols["t0"].append(ts[:-1])
        cols["t1"].append(ts[1:])
        cols["vel"].append(vel[parent])
    p0, p1 = np.concatenate(cols["p0"]), np.concatenate(cols["p1"])
    t0, t1 = np.concatenate(cols["t0"]), np.concatenate(cols["t1"])
    tri, _ = grid.locate_many(0.5 * (p0 + p1))
    return SegmentSet(
        grid=grid,
        traj_ids=tset.ids,
        traj_index=np.concatenate(cols["traj"]),
        triangle=tri,
        verts=grid.triangles[tri],
        w0=grid.barycentric_checked(tri, p0),
        w1=grid.barycentric_checked(tri, p1),
        p0=p0, p1=p1, t0=t0, t1=t1,
        velocity=np.concatenate(cols["vel"]),
        weight=(t1 - t0) / total,
        total_time=total,
    )
