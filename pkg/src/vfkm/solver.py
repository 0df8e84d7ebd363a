"""Regularized least-squares vector field fitting."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from vfkm import kernels
from vfkm.errors import InvalidArgumentError, NumericalBreakdownError, UnderdeterminedSystemError
from vfkm.fieldops import VectorField, cotangent_laplacian, segment_errors, smoothness
from vfkm.grid import Grid
from vfkm.trajectory import SegmentSet

DEFAULT_LAMBDA = 0.05
DEFAULT_CG_TOL = 1e-9


class _Pattern(NamedTuple):
    indptr: np.ndarray
    indices: np.ndarray
    slots: np.ndarray  # (n_triangles, 9): CSR slot of each local vertex pair
    lap: sp.csr_matrix
    lap_gram: sp.csr_matrix


@lru_cache(maxsize=32)
def _pattern(grid: Grid) -> _Pattern:
    n = grid.n_vertices
    tris = grid.triangles
    rows = np.repeat(tris, 3, axis=1)
    cols = np.tile(tris, (1, 3))
    keys = rows * n + cols
    uniq, inverse = np.unique(keys.ravel(), return_inverse=True)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(uniq // n, minlength=n), out=indptr[1:])
    lap = cotangent_laplacian(grid)
    return _Pattern(indptr, (uniq % n).astype(np.int64), inverse.reshape(-1, 9),
                    lap, (lap.T @ lap).tocsr())


@dataclass
class FitProblem:
    """Fit of one field to a selection of segments (all segments if ``selection`` is None)."""
    segments: SegmentSet
    lam: float = DEFAULT_LAMBDA
    selection: np.ndarray | None = None
    cg_tol: float = DEFAULT_CG_TOL
    cg_maxiter: int | None = None

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise InvalidArgumentError(f"smoothness weight must lie in (0, 1), got {self.lam}")
        if not self.cg_tol > 0:
            raise InvalidArgumentError("CG tolerance must be positive")
        if self.selection is None:
            self.selection = np.arange(len(self.segments), dtype=np.int64)
        else:
            self.selection = np.asarray(self.selection, dtype=np.int64)
        if self.cg_maxiter is None:
            self.cg_maxiter = 10 * self.grid.n_vertices

    @property
    def grid(self) -> Grid:
        return self.segments.grid

    @classmethod
    def for_trajectories(cls, segments: SegmentSet, traj_indices, **kw) -> "FitProblem":
        return cls(segments, selection=segments.segment_indices(traj_indices), **kw)

    @property
    def total_weight(self) -> float:
        return float(self.segments.weight[self.selection].sum())


def assemble_normal_system(problem: FitProblem):
    """Return ``(A, b_x, b_y)`` for the per-component normal equations.

    ``A = lam * W * L^T L + (1 - lam) * sum_s w_s C_s^T G C_s`` with ``W`` the
    summed weight of the selected segments and ``G`` the constraint Gram matrix.
    """
    if len(problem.selection) == 0:
        raise UnderdeterminedSystemError("cannot fit a vector field without segment constraints")
    segs = problem.segments
    pat = _pattern(segs.grid)
    n = segs.grid.n_vertices
    data, rhs = kernels.accumulate_system(
        problem.selection, pat.slots[segs.triangle], segs.verts, segs.w0, segs.w1,
        segs.velocity, segs.weight, len(pat.indices), n,
    )
    constraint = sp.csr_matrix((data, pat.indices, pat.indptr), shape=(n, n))
    lam = problem.lam
    A = (lam * problem.total_weight) * pat.lap_gram + (1.0 - lam) * constraint
    rhs *= 1.0 - lam
    return A.tocsr(), rhs[:, 0].copy(), rhs[:, 1].copy()


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def conjugate_gradient(A, b, x0=None, tol: float = DEFAULT_CG_TOL, maxiter: int | None = None) -> CGResult:
    """Plain (unpreconditioned) conjugate gradient for SPD ``A``.

    Stops once ``||A x - b|| <= tol * ||b||`` or after ``maxiter`` iterations.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    if maxiter is None:
        maxiter = 10 * n
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if not (np.isfinite(b).all() and np.isfinite(x).all()):
        raise NumericalBreakdownError("non-finite right-hand side or initial guess")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, True)
    target = tol * bnorm
    r = b - A @ x
    rr = float(r @ r)
    if np.sqrt(rr) <= target:
        return CGResult(x, 0, float(np.sqrt(rr)), True)
    p = r.copy()
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0.0:
            raise NumericalBreakdownError(f"CG breakdown at iteration {it} (p^T A p = {pAp})")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise NumericalBreakdownError(f"non-finite residual at iteration {it}")
        if np.sqrt(rr_new) <= target:
            return CGResult(x, it, float(np.sqrt(rr_new)), True)
        p *= rr_new / rr
        p += r
        rr = rr_new
    return CGResult(x, maxiter, float(np.sqrt(rr)), False)


class FitInfo(NamedTuple):
    iterations: tuple[int, int]
    residuals: tuple[float, float]
    converged: bool


def fit_vector_field(problem: FitProblem, x0: VectorField | None = None,
                     return_info: bool = False):
    """Smoothest best-fitting field for the problem's segments.

    Both components share one assembled matrix. ``x0`` warm-starts CG.
    """
    A, bx, by = assemble_normal_system(problem)
    start = x0.values if x0 is not None else np.zeros((problem.grid.n_vertices, 2))
    sols = [
        conjugate_gradient(A, b, start[:, c], problem.cg_tol, problem.cg_maxiter)
        for c, b in enumerate((bx, by))
    ]
    field = VectorField(problem.grid, np.column_stack([s.x for s in sols]))
    if return_info:
        info = FitInfo((sols[0].iterations, sols[1].iterations),
                       (sols[0].residual, sols[1].residual),
                       sols[0].converged and sols[1].converged)
        return field, info
    return field


def fit_objective(field: VectorField, problem: FitProblem) -> float:
    """Value of the quadratic the fit minimizes (smoothness + constraint terms)."""
    pat = _pattern(problem.grid)
    sub_err = segment_errors([field], problem.segments)[problem.selection, 0].sum()
    return (problem.lam * problem.total_weight * smoothness(field, pat.lap)
            + (1.0 - problem.lam) * float(sub_err))
