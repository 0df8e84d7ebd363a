"""Synthetic two-circles dataset: two overlapping circulations in opposite directions."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from vfkm.errors import InvalidArgumentError
from vfkm.trajectory import Trajectory, TrajectorySet, write_trajectories


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator parameters; lengths are in units of the [0, 1] x [0, 1] domain.

    Pattern 0 circulates counter-clockwise around ``(0.5 - offset/2, 0.5)``,
    pattern 1 clockwise around ``(0.5 + offset/2, 0.5)``. Each trajectory is an
    arc of random length at a random radius, traversed at constant angular
    speed and sampled every ``dt`` time units.
    """
    pattern: str = "two-circles"
    per_pattern: int = 1000
    arc_deg: tuple[float, float] = (60.0, 300.0)
    radius: tuple[float, float] = (0.2, 0.45)
    center_offset: float = 0.1
    noise: float = 0.002
    dt: float = 0.1
    angular_speed: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.pattern != "two-circles":
            raise InvalidArgumentError(f"unknown pattern {self.pattern!r}")
        if self.per_pattern < 1:
            raise InvalidArgumentError("per_pattern must be >= 1")
        lo, hi = self.radius
        if not 0 < lo <= hi or hi + self.center_offset / 2 > 0.5:
            raise InvalidArgumentError("radius range must be positive and keep circles inside [0, 1]^2")
        alo, ahi = self.arc_deg
        if not 0 < alo <= ahi <= 360:
            raise InvalidArgumentError("arc range must satisfy 0 < lo <= hi <= 360 degrees")
        if self.center_offset < 0 or self.noise < 0:
            raise InvalidArgumentError("center_offset and noise must be non-negative")
        if not (self.dt > 0 and self.angular_speed > 0):
            raise InvalidArgumentError("dt and angular_speed must be positive")

    @property
    def centers(self) -> tuple[tuple[float, float], tuple[float, float]]:
        h = self.center_offset / 2
        return (0.5 - h, 0.5), (0.5 + h, 0.5)

    def describe(self) -> str:
        d = asdict(self)
        parts = [f"{k}={v[0]!r}:{v[1]!r}" if isinstance(v, tuple) else f"{k}={v}" for k, v in d.items()]
        return "vfkm-synthetic " + " ".join(parts)


def generate(spec: SyntheticSpec = SyntheticSpec()) -> tuple[TrajectorySet, list[int]]:
    """Return the trajectories and their ground-truth pattern labels."""
    rng = np.random.default_rng(spec.seed)
    trajs, labels = [], []
    for label, (center, direction) in enumerate(zip(spec.centers, (1.0, -1.0))):
        for i in range(spec.per_pattern):
            r = rng.uniform(*spec.radius)
            arc = math.radians(rng.uniform(*spec.arc_deg))
            theta0 = rng.uniform(0.0, 2.0 * math.pi)
            n = max(2, int(math.floor(arc / (spec.angular_speed * spec.dt) + 1e-9)) + 1)
            t = np.arange(n) * spec.dt
            theta = theta0 + direction * spec.angular_speed * t
            pts = np.column_stack([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)])
            if spec.noise > 0:
                pts = pts + rng.normal(0.0, spec.noise, size=pts.shape)
            trajs.append(Trajectory(f"p{label}_{i:05d}", pts, t))
            labels.append(label)
    return TrajectorySet(trajs, metadata={"pattern": spec.pattern, "seed": str(spec.seed)}), labels


def write_synthetic(spec: SyntheticSpec, stream):
    tset, labels = generate(spec)
    write_trajectories(tset, stream, labels=labels, comments=[spec.describe()])
