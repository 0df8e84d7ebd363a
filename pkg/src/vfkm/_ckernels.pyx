# cython: language_level=3
"""Compiled per-segment kernels. Mirrors ``vfkm._pykernels``."""
import numpy as np

from libc.math cimport floor, ceil, sqrt
from libc.stdlib cimport malloc, free

cdef double MERGE_TOL = 1e-9


cdef inline Py_ssize_t _count(double s0, double ds) noexcept nogil:
    cdef double s1 = s0 + ds, lo, hi
    cdef Py_ssize_t c
    if ds == 0.0:
        return 0
    if ds > 0:
        lo, hi = s0, s1
    else:
        lo, hi = s1, s0
    c = <Py_ssize_t>ceil(hi) - <Py_ssize_t>floor(lo) - 1
    return c if c > 0 else 0


cdef inline Py_ssize_t _fill(double s0, double ds, double* buf, Py_ssize_t pos) noexcept nogil:
    cdef double s1 = s0 + ds, lo, hi
    cdef Py_ssize_t c, first, last
    if ds == 0.0:
        return pos
    if ds > 0:
        lo, hi = s0, s1
    else:
        lo, hi = s1, s0
    first = <Py_ssize_t>floor(lo) + 1
    last = <Py_ssize_t>ceil(hi)
    for c in range(first, last):
        buf[pos] = (c - s0) / ds
        pos += 1
    return pos


cdef inline void _insertion_sort(double* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


def tessellate(xy_in, t_in, double ox, double oy, double hx, double hy):
    cdef double[:, ::1] xy = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef double[::1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], i, j, ncand, total = 0, maxcand = 0, pos
    cdef double gx0, gy0, dgx, dgy, glen, tau, last, x0, y0, x1, y1, t0, t1

    for i in range(n - 1):
        gx0 = (xy[i, 0] - ox) / hx
        gy0 = (xy[i, 1] - oy) / hy
        dgx = (xy[i + 1, 0] - ox) / hx - gx0
        dgy = (xy[i + 1, 1] - oy) / hy - gy0
        ncand = _count(gx0, dgx) + _count(gy0, dgy) + _count(gx0 + gy0, dgx + dgy)
        total += ncand
        if ncand > maxcand:
            maxcand = ncand

    points = np.empty((n + total, 2))
    times = np.empty(n + total)
    parent = np.empty(n + total - 1 if n + total > 0 else 0, dtype=np.int64)
    cdef double[:, ::1] P = points
    cdef double[::1] T = times
    cdef long long[::1] par = parent
    cdef double* buf = <double*>malloc((maxcand + 1) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t out = 1
    try:
        P[0, 0] = xy[0, 0]
        P[0, 1] = xy[0, 1]
        T[0] = t[0]
        for i in range(n - 1):
            x0 = xy[i, 0]
            y0 = xy[i, 1]
            x1 = xy[i + 1, 0]
            y1 = xy[i + 1, 1]
            t0 = t[i]
            t1 = t[i + 1]
            gx0 = (x0 - ox) / hx
            gy0 = (y0 - oy) / hy
            dgx = (x1 - ox) / hx - gx0
            dgy = (y1 - oy) / hy - gy0
            glen = sqrt(dgx * dgx + dgy * dgy)
            pos = _fill(gx0, dgx, buf, 0)
            pos = _fill(gy0, dgy, buf, pos)
            pos = _fill(gx0 + gy0, dgx + dgy, buf, pos)
            _insertion_sort(buf, pos)
            last = 0.0
            for j in range(pos):
                tau = buf[j]
                if (tau - last) * glen < MERGE_TOL or (1.0 - tau) * glen < MERGE_TOL:
                    continue
                P[out, 0] = x0 + tau * (x1 - x0)
                P[out, 1] = y0 + tau * (y1 - y0)
                T[out] = t0 + tau * (t1 - t0)
                par[out - 1] = i
                out += 1
                last = tau
            P[out, 0] = x1
            P[out, 1] = y1
            T[out] = t1
            par[out - 1] = i
            out += 1
    finally:
        free(buf)
    return points[:out], times[:out], parent[:out - 1]


def segment_errors(verts_in, w0_in, w1_in, vel_in, omega_in, values_in):
    cdef long long[:, ::1] verts = np.ascontiguousarray(verts_in, dtype=np.int64)
    cdef double[:, ::1] w0 = np.ascontiguousarray(w0_in, dtype=np.float64)
    cdef double[:, ::1] w1 = np.ascontiguousarray(w1_in, dtype=np.float64)
    cdef double[:, ::1] vel = np.ascontiguousarray(vel_in, dtype=np.float64)
    cdef double[::1] omega = np.ascontiguousarray(omega_in, dtype=np.float64)
    cdef double[:, :, ::1] values = np.ascontiguousarray(values_in, dtype=np.float64)
    cdef Py_ssize_t m = omega.shape[0], k = values.shape[0], s, j, a, c
    cdef long long v
    cdef double r0[2]
    cdef double r1[2]
    result = np.empty((m, k))
    cdef double[:, ::1] out = result
    with nogil:
        for s in range(m):
            for j in range(k):
                for c in range(2):
                    r0[c] = -vel[s, c]
                    r1[c] = -vel[s, c]
                for a in range(3):
                    v = verts[s, a]
                    for c in range(2):
                        r0[c] += w0[s, a] * values[j, v, c]
                        r1[c] += w1[s, a] * values[j, v, c]
                out[s, j] = omega[s] * (
                    r0[0] * r0[0] + r0[1] * r0[1]
                    + r1[0] * r1[0] + r1[1] * r1[1]
                    + r0[0] * r1[0] + r0[1] * r1[1]
                ) / 3.0
    return result


def accumulate_system(sel_in, slots_in, verts_in, w0_in, w1_in, vel_in, omega_in,
                      Py_ssize_t nnz, Py_ssize_t n):
    cdef long long[::1] sel = np.ascontiguousarray(sel_in, dtype=np.int64)
    cdef long long[:, ::1] slots = np.ascontiguousarray(slots_in, dtype=np.int64)
    cdef long long[:, ::1] verts = np.ascontiguousarray(verts_in, dtype=np.int64)
    cdef double[:, ::1] w0 = np.ascontiguousarray(w0_in, dtype=np.float64)
    cdef double[:, ::1] w1 = np.ascontiguousarray(w1_in, dtype=np.float64)
    cdef double[:, ::1] vel = np.ascontiguousarray(vel_in, dtype=np.float64)
    cdef double[::1] omega = np.ascontiguousarray(omega_in, dtype=np.float64)
    data_arr = np.zeros(nnz)
    rhs_arr = np.zeros((n, 2))
    cdef double[::1] data = data_arr
    cdef double[:, ::1] rhs = rhs_arr
    cdef Py_ssize_t q = sel.shape[0], ii, s, a, b
    cdef double w, h
    with nogil:
        for ii in range(q):
            s = sel[ii]
            w = omega[s]
            for a in range(3):
                for b in range(3):
                    data[slots[s, 3 * a + b]] += w * (
                        (w0[s, a] * w0[s, b] + w1[s, a] * w1[s, b]) / 3.0
                        + (w0[s, a] * w1[s, b] + w1[s, a] * w0[s, b]) / 6.0
                    )
                h = 0.5 * w * (w0[s, a] + w1[s, a])
                rhs[verts[s, a], 0] += h * vel[s, 0]
                rhs[verts[s, a], 1] += h * vel[s, 1]
    return data_arr, rhs_arr
