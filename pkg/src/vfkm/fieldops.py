"""Vector fields on the grid and the operators that act on them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from vfkm import kernels
from vfkm.errors import GridMismatchError, InvalidArgumentError, ParseError
from vfkm.grid import Grid
from vfkm.trajectory import Segment, SegmentSet

FIELD_HEADER = "vfkm-field v1"

# Exact integral weights of a linear mismatch over a segment:
# [[int (1-s)^2, int s(1-s)], [int s(1-s), int s^2]] over s in [0, 1].
GRAM = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


class LambdaMatrix(NamedTuple):
    matrix: np.ndarray
    gram: np.ndarray


def lambda_matrix() -> LambdaMatrix:
    """SPD square root of the continuous constraint Gram matrix."""
    a = 1.0 / math.sqrt(2.0)
    b = 1.0 / math.sqrt(6.0)
    lam = 0.5 * np.array([[a + b, a - b], [a - b, a + b]])
    return LambdaMatrix(lam, GRAM.copy())


@dataclass(eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_vertices, 2):
            raise InvalidArgumentError(
                f"expected values of shape {(self.grid.n_vertices, 2)}, got {vals.shape}"
            )
        if not np.isfinite(vals).all():
            raise InvalidArgumentError("field values must be finite")
        self.values = vals

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.n_vertices, 2)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "VectorField":
        """Sample ``fn(x, y) -> (vx, vy)`` at every grid vertex."""
        v = grid.vertices
        vx, vy = fn(v[:, 0], v[:, 1])
        return cls(grid, np.column_stack([np.broadcast_to(vx, len(v)), np.broadcast_to(vy, len(v))]))

    def __call__(self, p) -> np.ndarray:
        return eval_field(self, p)

    def at(self, points) -> np.ndarray:
        tri, bary = self.grid.locate_many(points)
        return np.einsum("mi,mic->mc", bary, self.values[self.grid.triangles[tri]])


def eval_field(field: VectorField, p) -> np.ndarray:
    """Linear interpolation of ``field`` at point ``p``."""
    return field.at([p])[0]


@lru_cache(maxsize=32)
def cotangent_laplacian(grid: Grid) -> sp.csr_matrix:
    """Cotangent-weight Laplacian: off-diagonals 1/2 (cot a + cot b), rows sum to zero."""
    tris = grid.triangles
    hx, hy = grid.hx, grid.hy
    # All lower (resp. upper) triangles are congruent; use cell-local corners
    # so right angles give exactly zero and square cells exactly one.
    local = {
        0: np.array([[0.0, 0.0], [hx, 0.0], [0.0, hy]]),
        1: np.array([[hx, hy], [0.0, hy], [hx, 0.0]]),
    }
    rows, cols, vals = [], [], []
    for half in (0, 1):
        t = tris[half::2]
        pos = local[half]
        for k in range(3):
            # Edge (p, q) is weighted by the angle at the opposite corner k.
            a = pos[(k + 1) % 3] - pos[k]
            b = pos[(k + 2) % 3] - pos[k]
            w = 0.5 * float(a @ b) / abs(a[0] * b[1] - a[1] * b[0])
            p, q = t[:, (k + 1) % 3], t[:, (k + 2) % 3]
            rows += [p, q]
            cols += [q, p]
            vals += [np.full(len(t), w)] * 2
    n = grid.n_vertices
    off = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    off.sum_duplicates()
    lap = (off - sp.diags(np.asarray(off.sum(1)).ravel())).tocsr()
    lap.eliminate_zeros()
    lap.sort_indices()
    return lap


def smoothness(field: VectorField, laplacian=None) -> float:
    """Squared norm of the vector Laplacian, summed over both components."""
    if laplacian is None:
        laplacian = cotangent_laplacian(field.grid)
    lv = laplacian @ field.values
    return float((lv * lv).sum())


class SegmentConstraint(NamedTuple):
    vertices: tuple[int, int, int]
    rows: np.ndarray
    target: np.ndarray
    weight: float


def segment_constraint(grid: Grid, seg: Segment) -> SegmentConstraint:
    """Barycentric rows of both endpoints in the segment's face, and the velocity targets."""
    face = grid.face(seg.triangle)
    rows = grid.barycentric_checked(np.array([seg.triangle] * 2), np.array([seg.p0, seg.p1]))
    target = np.array([seg.velocity, seg.velocity], dtype=float)
    return SegmentConstraint(face.vertices, rows, target, seg.weight)


def _check_grid(field: VectorField, segments: SegmentSet):
    if field.grid != segments.grid:
        raise GridMismatchError("field and segments live on different grids")


def segment_errors(fields, segments: SegmentSet) -> np.ndarray:
    """Per-segment weighted mismatch against each field, shape (m, k)."""
    fields = list(fields)
    for f in fields:
        _check_grid(f, segments)
    values = np.stack([f.values for f in fields])
    return kernels.segment_errors(
        segments.verts, segments.w0, segments.w1, segments.velocity, segments.weight, values
    )


def trajectory_errors(fields, segments: SegmentSet) -> np.ndarray:
    """Trajectory error of each trajectory against each field, shape (n, k)."""
    return segments.per_trajectory(segment_errors(fields, segments))


def traj_error(field: VectorField, segments: SegmentSet) -> float:
    """Weighted squared L2 tangency mismatch of ``field`` over all given segments."""
    return float(segment_errors([field], segments)[:, 0].sum())


def write_field(field: VectorField, stream):
    g = field.grid
    stream.write(FIELD_HEADER + "\n")
    stream.write(f"{g.resolution} {g.bbox_min[0]!r} {g.bbox_min[1]!r} "
                 f"{g.bbox_max[0]!r} {g.bbox_max[1]!r}\n")
    for vx, vy in field.values:
        stream.write(f"{float(vx)!r} {float(vy)!r}\n")


def read_field(stream) -> VectorField:
    lines = [ln.strip() for ln in stream if ln.strip()]
    if not lines or lines[0] != FIELD_HEADER:
        raise ParseError(f"expected header {FIELD_HEADER!r}", 1)
    try:
        r, xmin, ymin, xmax, ymax = lines[1].split()
        grid = Grid((float(xmin), float(ymin)), (float(xmax), float(ymax)), int(r))
    except (ValueError, IndexError):
        raise ParseError("malformed grid line", 2) from None
    body = lines[2:]
    if len(body) != grid.n_vertices:
        raise ParseError(f"expected {grid.n_vertices} value lines, got {len(body)}")
    try:
        values = np.array([[float(v) for v in ln.split()] for ln in body])
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if values.shape != (grid.n_vertices, 2):
        raise ParseError("each value line needs exactly two numbers")
    return VectorField(grid, values)


def save_field(field: VectorField, path):
    with open(path, "w", encoding="utf-8") as fh:
        write_field(field, fh)


def load_field(path) -> VectorField:
    with open(path, encoding="utf-8") as fh:
        return read_field(fh)
