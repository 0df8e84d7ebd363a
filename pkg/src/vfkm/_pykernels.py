"""Pure-Python / numpy implementations of the per-segment kernels.

Signatures mirror ``_ckernels``; ``vfkm.kernels`` picks one at import.
"""
import math

import numpy as np

# Crossings closer than this (in cell units) to a kept vertex are merged.
MERGE_TOL = 1e-9


def _line_crossings(s0, ds, out):
    # Parameters in (0, 1) where s0 + tau * ds hits an integer.
    if ds == 0.0:
        return
    s1 = s0 + ds
    lo, hi = (s0, s1) if ds > 0 else (s1, s0)
    for c in range(math.floor(lo) + 1, math.ceil(hi)):
        out.append((c - s0) / ds)


def tessellate(xy, t, ox, oy, hx, hy):
    """Insert every grid-line and cell-diagonal crossing into a polyline.

    Returns ``(points, times, parent)``; ``parent[j]`` is the input segment
    that output segment ``j`` came from.
    """
    xy = np.asarray(xy, dtype=float)
    t = np.asarray(t, dtype=float)
    out_x = [float(xy[0, 0])]
    out_y = [float(xy[0, 1])]
    out_t = [float(t[0])]
    parent = []
    for i in range(len(t) - 1):
        x0, y0 = float(xy[i, 0]), float(xy[i, 1])
        x1, y1 = float(xy[i + 1, 0]), float(xy[i + 1, 1])
        t0, t1 = float(t[i]), float(t[i + 1])
        gx0, gy0 = (x0 - ox) / hx, (y0 - oy) / hy
        dgx, dgy = (x1 - ox) / hx - gx0, (y1 - oy) / hy - gy0
        glen = math.hypot(dgx, dgy)
        taus = []
        _line_crossings(gx0, dgx, taus)
        _line_crossings(gy0, dgy, taus)
        _line_crossings(gx0 + gy0, dgx + dgy, taus)
        taus.sort()
        last = 0.0
        for tau in taus:
            if (tau - last) * glen < MERGE_TOL or (1.0 - tau) * glen < MERGE_TOL:
                continue
            out_x.append(x0 + tau * (x1 - x0))
            out_y.append(y0 + tau * (y1 - y0))
            out_t.append(t0 + tau * (t1 - t0))
            parent.append(i)
            last = tau
        out_x.append(x1)
        out_y.append(y1)
        out_t.append(t1)
        parent.append(i)
    points = np.column_stack([out_x, out_y])
    return points, np.array(out_t), np.array(parent, dtype=np.int64)


def segment_errors(verts, w0, w1, velocity, omega, values):
    """Weighted Gram-form mismatch of every segment against every field.

    ``values`` has shape (k, n_vertices, 2); the result has shape (m, k).
    """
    k = values.shape[0]
    out = np.empty((len(omega), k))
    for j in range(k):
        vals = values[j][verts]
        r0 = np.einsum("mi,mic->mc", w0, vals) - velocity
        r1 = np.einsum("mi,mic->mc", w1, vals) - velocity
        quad = (r0 * r0).sum(1) + (r1 * r1).sum(1) + (r0 * r1).sum(1)
        out[:, j] = omega * quad / 3.0
    return out


def accumulate_system(sel, slots, verts, w0, w1, velocity, omega, nnz, n):
    """Sum the constraint blocks of the selected segments.

    Returns the CSR data of sum(w C^T G C) on the triangle pattern and the
    right-hand side sum(w C^T G y) with one column per spatial component.
    """
    a, b, wv = w0[sel], w1[sel], omega[sel]
    blocks = (np.einsum("mi,mj->mij", a, a) + np.einsum("mi,mj->mij", b, b)) / 3.0
    cross = np.einsum("mi,mj->mij", a, b)
    blocks += (cross + cross.transpose(0, 2, 1)) / 6.0
    blocks *= wv[:, None, None]
    data = np.bincount(slots[sel].ravel(), weights=blocks.ravel(), minlength=nnz)
    half = 0.5 * wv[:, None] * (a + b)
    idx = verts[sel].ravel()
    rhs = np.empty((n, 2))
    for c in range(2):
        contrib = half * velocity[sel, c][:, None]
        rhs[:, c] = np.bincount(idx, weights=contrib.ravel(), minlength=n)
    return data, rhs
