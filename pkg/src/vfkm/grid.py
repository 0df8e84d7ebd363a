"""Regular triangulated grid: construction, point location, tessellation.

Vertices are indexed row-major, ``index = j * R + i`` with ``i`` along x.
Every cell is split by the diagonal running from its lower-right to its
upper-left corner. Triangle ``2 * cell`` is the lower-left half with
vertices (00, 10, 01); triangle ``2 * cell + 1`` is the upper-right half
with vertices (11, 01, 10), where ``cell = cj * (R - 1) + ci``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from vfkm import kernels
from vfkm.errors import (
    InternalConsistencyError,
    InvalidArgumentError,
    MalformedTrajectoryError,
    OutOfDomainError,
)

# Tolerated overshoot of barycentric weights for points that belong to a
# face only up to rounding.
BARY_EPS = 1e-9


class FaceRef(NamedTuple):
    triangle: int
    vertices: tuple[int, int, int]


class BarycentricCoords(NamedTuple):
    w0: float
    w1: float
    w2: float


@dataclass(frozen=True)
class Grid:
    bbox_min: tuple[float, float]
    bbox_max: tuple[float, float]
    resolution: int

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise InvalidArgumentError(f"resolution must be an integer >= 2, got {self.resolution}")
        lo = tuple(float(v) for v in self.bbox_min)
        hi = tuple(float(v) for v in self.bbox_max)
        if len(lo) != 2 or len(hi) != 2:
            raise InvalidArgumentError("bounding box corners must be 2-D points")
        if not all(np.isfinite(lo + hi)):
            raise InvalidArgumentError("bounding box must be finite")
        if not (hi[0] > lo[0] and hi[1] > lo[1]):
            raise InvalidArgumentError(f"degenerate bounding box {lo} - {hi}")
        object.__setattr__(self, "bbox_min", lo)
        object.__setattr__(self, "bbox_max", hi)
        object.__setattr__(self, "resolution", int(self.resolution))

    @classmethod
    def from_points(cls, points, resolution: int, pad: float = 1e-6) -> "Grid":
        """Bounding grid of ``points``, inflated by ``pad`` times its diagonal on each side."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise InvalidArgumentError("cannot build a grid from zero points")
        lo, hi = pts.min(0), pts.max(0)
        margin = pad * float(np.hypot(*(hi - lo)))
        if margin == 0.0:
            raise InvalidArgumentError("all points coincide; bounding box is degenerate")
        return cls(tuple(lo - margin), tuple(hi + margin), resolution)

    @property
    def hx(self) -> float:
        return (self.bbox_max[0] - self.bbox_min[0]) / (self.resolution - 1)

    @property
    def hy(self) -> float:
        return (self.bbox_max[1] - self.bbox_min[1]) / (self.resolution - 1)

    @property
    def n_vertices(self) -> int:
        return self.resolution ** 2

    @property
    def n_triangles(self) -> int:
        return 2 * (self.resolution - 1) ** 2

    @cached_property
    def vertices(self) -> np.ndarray:
        R = self.resolution
        xs = np.linspace(self.bbox_min[0], self.bbox_max[0], R)
        ys = np.linspace(self.bbox_min[1], self.bbox_max[1], R)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    @cached_property
    def triangles(self) -> np.ndarray:
        R = self.resolution
        cj, ci = np.divmod(np.arange((R - 1) ** 2), R - 1)
        v00 = cj * R + ci
        v10 = v00 + 1
        v01 = v00 + R
        v11 = v01 + 1
        tris = np.empty((self.n_triangles, 3), dtype=np.int64)
        tris[0::2] = np.column_stack([v00, v10, v01])
        tris[1::2] = np.column_stack([v11, v01, v10])
        return tris

    def vertex_index(self, i: int, j: int) -> int:
        return j * self.resolution + i

    def face(self, triangle: int) -> FaceRef:
        return FaceRef(int(triangle), tuple(int(v) for v in self.triangles[triangle]))

    def contains(self, p) -> bool:
        x, y = p
        return (self.bbox_min[0] <= x <= self.bbox_max[0]
                and self.bbox_min[1] <= y <= self.bbox_max[1])

    def check_inside(self, points, what: str = "point"):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        for axis, name in ((0, "x"), (1, "y")):
            bad = (pts[:, axis] < self.bbox_min[axis]) | (pts[:, axis] > self.bbox_max[axis])
            if not np.isfinite(pts[:, axis]).all():
                raise OutOfDomainError(f"{what} has a non-finite {name} coordinate")
            if bad.any():
                value = float(pts[np.argmax(bad), axis])
                raise OutOfDomainError(
                    f"{what} {name}={value!r} outside grid range "
                    f"[{self.bbox_min[axis]!r}, {self.bbox_max[axis]!r}]"
                )

    def _grid_coords(self, pts):
        gx = (pts[:, 0] - self.bbox_min[0]) / self.hx
        gy = (pts[:, 1] - self.bbox_min[1]) / self.hy
        return gx, gy

    def locate_many(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`locate`: triangle indices and (m, 3) barycentric weights."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        self.check_inside(pts)
        R = self.resolution
        gx, gy = self._grid_coords(pts)
        # Points on a cell edge go to the lower-indexed cell, which holds the
        # lowest-indexed triangle among those sharing the edge.
        ci = np.clip(np.ceil(gx).astype(np.int64) - 1, 0, R - 2)
        cj = np.clip(np.ceil(gy).astype(np.int64) - 1, 0, R - 2)
        upper = (gx - ci) + (gy - cj) > 1.0
        tri = 2 * (cj * (R - 1) + ci) + upper
        return tri, self.barycentric(tri, pts)

    def locate(self, p) -> tuple[FaceRef, BarycentricCoords]:
        tri, bary = self.locate_many([p])
        return self.face(tri[0]), BarycentricCoords(*map(float, bary[0]))

    def barycentric(self, tri, points) -> np.ndarray:
        """Barycentric weights of ``points`` with respect to the given triangles.

        Points may lie slightly outside the triangle; the weights are the exact
        affine coordinates either way.
        """
        tri = np.asarray(tri, dtype=np.int64)
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        R = self.resolution
        cell, upper = np.divmod(tri, 2)
        cj, ci = np.divmod(cell, R - 1)
        gx, gy = self._grid_coords(pts)
        u = gx - ci
        v = gy - cj
        lower_w = np.column_stack([1.0 - u - v, u, v])
        upper_w = np.column_stack([u + v - 1.0, 1.0 - u, 1.0 - v])
        return np.where(upper[:, None] == 1, upper_w, lower_w)

    def barycentric_checked(self, tri, points) -> np.ndarray:
        w = self.barycentric(tri, points)
        if len(w) and (w.min() < -BARY_EPS or w.max() > 1.0 + BARY_EPS):
            bad = int(np.argmax((w < -BARY_EPS).any(1) | (w > 1.0 + BARY_EPS).any(1)))
            raise InternalConsistencyError(
                f"point {tuple(np.asarray(points)[bad])} lies outside triangle {int(tri[bad])}"
            )
        return w

    def tessellate(self, points, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Split a timed polyline at every triangle edge it crosses.

        Returns ``(points, times, parent)`` where ``parent[j]`` is the index of
        the input segment containing output segment ``j``.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        t = np.asarray(times, dtype=float).ravel()
        if len(pts) != len(t):
            raise InvalidArgumentError("points and times differ in length")
        if len(t) < 2:
            raise MalformedTrajectoryError("a polyline needs at least two samples")
        if not (np.diff(t) > 0).all():
            raise MalformedTrajectoryError("sample times must be strictly increasing")
        self.check_inside(pts)
        return kernels.tessellate(pts, t, self.bbox_min[0], self.bbox_min[1], self.hx, self.hy)


def build_grid(bbox_min, bbox_max, resolution: int) -> Grid:
    return Grid(tuple(bbox_min), tuple(bbox_max), resolution)
