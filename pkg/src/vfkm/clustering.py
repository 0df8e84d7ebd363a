"""Vector-field k-means: alternate between fitting one field per cluster and
reassigning each trajectory to the field that explains it best."""
from __future__ import annotations

import logging
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from vfkm.errors import InvalidArgumentError
from vfkm.fieldops import VectorField, smoothness, trajectory_errors
from vfkm.grid import Grid
from vfkm.solver import DEFAULT_CG_TOL, DEFAULT_LAMBDA, FitProblem, fit_vector_field, _pattern
from vfkm.trajectory import SegmentSet, TrajectorySet, build_segments

log = logging.getLogger(__name__)

ASSIGN_MODES = ("weighted", "unweighted")


@dataclass
class ClusteringConfig:
    k: int
    resolution: int = 5
    lam: float = DEFAULT_LAMBDA
    max_iter: int = 100
    cg_tol: float = DEFAULT_CG_TOL
    cg_maxiter: int | None = None
    seed: int = 0
    assign_mode: str = "weighted"
    energy_rtol: float = 1e-7

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidArgumentError(f"k must be a positive integer, got {self.k}")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise InvalidArgumentError(f"resolution must be an integer >= 2, got {self.resolution}")
        if not 0.0 < self.lam < 1.0:
            raise InvalidArgumentError(f"lam must lie in (0, 1), got {self.lam}")
        if self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be >= 1")
        if self.assign_mode not in ASSIGN_MODES:
            raise InvalidArgumentError(f"assign_mode must be one of {ASSIGN_MODES}")


@dataclass
class Assignment:
    labels: np.ndarray
    k: int
    iteration: int = 0

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.labels == j)


class IterationRecord(NamedTuple):
    iter: int
    E_total: float
    E_smooth: list[float]
    E_fit: list[float]
    cluster_sizes: list[int]
    moved: int

    def to_json(self) -> dict:
        return self._asdict()


class PhaseTimer:
    """Accumulates wall time per named phase."""

    def __init__(self):
        self.totals = defaultdict(float)

    def add(self, phase: str, seconds: float):
        self.totals[phase] += seconds

    @contextmanager
    def timed(self, phase: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.add(phase, time.perf_counter() - t0)


@dataclass
class RunState:
    config: ClusteringConfig
    trajectories: TrajectorySet
    segments: SegmentSet
    fields: list[VectorField]
    assignment: Assignment
    history: list[IterationRecord] = field(default_factory=list)
    # (step, energy) after every half step: "init", "repair", "fit", "assign".
    half_steps: list[tuple[str, float]] = field(default_factory=list)
    status: str = "running"
    repairs: int = 0
    timings: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.segments.grid

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def _fit(segments, traj_indices, lam, cg_tol, cg_maxiter, x0=None):
    problem = FitProblem.for_trajectories(segments, traj_indices, lam=lam, cg_tol=cg_tol,
                                          cg_maxiter=cg_maxiter)
    return fit_vector_field(problem, x0=x0)


def assignment_costs(fields, segments: SegmentSet, lam: float, mode: str = "weighted",
                     timer: PhaseTimer | None = None) -> np.ndarray:
    """Per-trajectory cost of each field, shape (n, k).

    ``weighted``: ``(1 - lam) * err + lam * w_traj * ||L X||^2`` where
    ``w_traj`` is the trajectory's share of the total timespan, so costs sum
    to the total energy. ``unweighted``: the same without ``w_traj``.
    """
    if mode not in ASSIGN_MODES:
        raise InvalidArgumentError(f"unknown assignment mode {mode!r}")
    t0 = time.perf_counter()
    lap = _pattern(segments.grid).lap
    err = trajectory_errors(fields, segments)
    smooth = np.array([smoothness(f, lap) for f in fields])
    scale = segments.trajectory_weight[:, None] if mode == "weighted" else 1.0
    costs = (1.0 - lam) * err + lam * scale * smooth[None, :]
    if timer is not None:
        timer.add("eval", time.perf_counter() - t0)
    return costs


def assign(fields, segments: SegmentSet, lam: float, mode: str = "weighted",
           timer: PhaseTimer | None = None, iteration: int = 0) -> Assignment:
    """Map every trajectory to its lowest-cost field (ties: lowest index)."""
    costs = assignment_costs(fields, segments, lam, mode, timer)
    t0 = time.perf_counter()
    labels = np.argmin(costs, axis=1)
    if timer is not None:
        timer.add("assign", time.perf_counter() - t0)
    return Assignment(labels.astype(np.int64), len(fields), iteration)


def energy_terms(fields, assignment: Assignment, segments: SegmentSet, lam: float):
    """Per-cluster smoothness and fit terms of the total energy."""
    lap = _pattern(segments.grid).lap
    err = trajectory_errors(fields, segments)
    n = segments.n_trajectories
    own = err[np.arange(n), assignment.labels]
    weights = np.bincount(assignment.labels, weights=segments.trajectory_weight,
                          minlength=assignment.k)
    fit_terms = (1.0 - lam) * np.bincount(assignment.labels, weights=own, minlength=assignment.k)
    smooth_terms = np.array([lam * weights[j] * smoothness(f, lap) for j, f in enumerate(fields)])
    return smooth_terms, fit_terms


def total_energy(fields, assignment: Assignment, segments: SegmentSet, lam: float) -> float:
    """Sum over clusters of ``lam * W_j * ||L X_j||^2 + (1 - lam) * sum err(X_j, traj)``."""
    smooth_terms, fit_terms = energy_terms(fields, assignment, segments, lam)
    return float(smooth_terms.sum() + fit_terms.sum())


def _initialize(segments: SegmentSet, config: ClusteringConfig, first=None,
                timer: PhaseTimer | None = None):
    n = segments.n_trajectories
    k = config.k
    if n < k:
        raise InvalidArgumentError(f"need at least k={k} trajectories, got {n}")
    if first is None:
        rng = np.random.default_rng(config.seed)
        first = int(rng.integers(n))
    elif isinstance(first, str):
        first = segments.traj_ids.index(first)
    timer = timer or PhaseTimer()
    chosen = [first]
    fields = []
    best = np.full(n, np.inf)
    for i in range(k):
        with timer.timed("fit"):
            fields.append(_fit(segments, [chosen[-1]], config.lam, config.cg_tol, config.cg_maxiter))
        if i == k - 1:
            break
        costs = assignment_costs(fields[-1:], segments, config.lam, config.assign_mode, timer)[:, 0]
        best = np.minimum(best, costs)
        candidates = best.copy()
        candidates[chosen] = -np.inf
        chosen.append(int(np.argmax(candidates)))
    assignment = assign(fields, segments, config.lam, config.assign_mode, timer)
    return assignment, fields, chosen


def initialize(segments: SegmentSet, k: int, seed: int = 0, lam: float = DEFAULT_LAMBDA,
               mode: str = "weighted", first=None) -> Assignment:
    """Farthest-first seeding: start from a random trajectory, then repeatedly
    seed the trajectory worst explained by the fields built so far."""
    config = ClusteringConfig(k=k, resolution=segments.grid.resolution, lam=lam, seed=seed,
                              assign_mode=mode)
    return _initialize(segments, config, first)[0]


def repair_empty(assignment: Assignment, fields, segments: SegmentSet, lam: float,
                 mode: str = "weighted") -> int:
    """Refill empty clusters with the worst-fitting half of the largest cluster.

    Modifies ``assignment`` in place; returns the number of repaired clusters.
    """
    repaired = 0
    while True:
        sizes = assignment.sizes()
        empty = np.flatnonzero(sizes == 0)
        if len(empty) == 0:
            return repaired
        target = int(empty[0])
        largest = int(np.argmax(sizes))
        members = assignment.members(largest)
        cost = assignment_costs([fields[largest]], segments.subset(members), lam, mode)[:, 0]
        # Worst first; ties broken by trajectory index.
        order = np.lexsort((members, -cost))
        move = members[order[: max(1, len(members) // 2)]]
        assignment.labels[move] = target
        repaired += 1


def run(config: ClusteringConfig, trajectories: TrajectorySet, grid: Grid | None = None,
        first=None) -> RunState:
    """Run vector-field k-means to convergence or the iteration cap.

    Stops when the assignment repeats, when the relative energy change drops
    below ``config.energy_rtol``, or after ``config.max_iter`` iterations.
    """
    t_start = time.perf_counter()
    timer = PhaseTimer()
    if grid is None:
        grid = Grid.from_points(trajectories.all_points(), config.resolution)
    segments = build_segments(trajectories, grid)
    lam, mode = config.lam, config.assign_mode

    assignment, fields, _ = _initialize(segments, config, first, timer)
    state = RunState(config, trajectories, segments, fields, assignment)

    def record(it, moved):
        smooth, fit = energy_terms(state.fields, state.assignment, segments, lam)
        rec = IterationRecord(it, float(smooth.sum() + fit.sum()), smooth.tolist(), fit.tolist(),
                              state.assignment.sizes().tolist(), int(moved))
        state.history.append(rec)
        return rec

    rec = record(0, 0)
    state.half_steps.append(("init", rec.E_total))
    state.status = "max_iter"
    for it in range(1, config.max_iter + 1):
        repaired = repair_empty(state.assignment, state.fields, segments, lam, mode)
        if repaired:
            state.repairs += repaired
            state.half_steps.append(
                ("repair", total_energy(state.fields, state.assignment, segments, lam)))
            log.info("iteration %d: repaired %d empty cluster(s)", it, repaired)
        with timer.timed("fit"):
            state.fields = [
                _fit(segments, state.assignment.members(j), lam, config.cg_tol,
                     config.cg_maxiter, x0=state.fields[j])
                for j in range(config.k)
            ]
        state.half_steps.append(("fit", total_energy(state.fields, state.assignment, segments, lam)))
        new = assign(state.fields, segments, lam, mode, timer, iteration=it)
        moved = int((new.labels != state.assignment.labels).sum())
        state.assignment = new
        prev = state.history[-1].E_total
        rec = record(it, moved)
        state.half_steps.append(("assign", rec.E_total))
        log.debug("iteration %d: E=%.6g moved=%d", it, rec.E_total, moved)
        if moved == 0:
            state.status = "converged"
            break
        if abs(prev - rec.E_total) <= config.energy_rtol * abs(prev):
            state.status = "converged"
            break
    state.timings = {
        "fit": timer.totals["fit"],
        "eval": timer.totals["eval"],
        "assign": timer.totals["assign"],
        "total": time.perf_counter() - t_start,
    }
    return state


def subcluster(state: RunState, cluster: int, config: ClusteringConfig | None = None) -> RunState:
    """Re-run the whole algorithm on one cluster's trajectories, on a fresh grid."""
    members = state.assignment.members(cluster)
    if len(members) == 0:
        raise InvalidArgumentError(f"cluster {cluster} is empty")
    config = config or state.config
    return run(config, state.trajectories.subset(members))
