"""Time the compiled and pure-Python kernel backends on the same workload.

    python benchmarks/bench_kernels.py [--per-pattern N] [--resolution R] [--k K] [--repeat N]
"""
import argparse
import timeit

import numpy as np

from vfkm import kernels
from vfkm.clustering import ClusteringConfig, run
from vfkm.grid import Grid
from vfkm.solver import _pattern
from vfkm.synthetic import SyntheticSpec, generate
from vfkm.trajectory import build_segments


def workloads(tset, grid, k):
    segs = build_segments(tset, grid)
    pat = _pattern(grid)
    values = np.random.default_rng(0).normal(size=(k, grid.n_vertices, 2))
    sel = np.arange(len(segs), dtype=np.int64)
    slots = pat.slots[segs.triangle]
    ox, oy = grid.bbox_min

    def tessellate(backend):
        for tr in tset:
            backend.tessellate(tr.points, tr.times, ox, oy, grid.hx, grid.hy)

    def segment_errors(backend):
        backend.segment_errors(segs.verts, segs.w0, segs.w1, segs.velocity, segs.weight, values)

    def accumulate(backend):
        backend.accumulate_system(sel, slots, segs.verts, segs.w0, segs.w1, segs.velocity,
                                  segs.weight, len(pat.indices), grid.n_vertices)

    return len(segs), {"tessellate": tessellate, "segment_errors": segment_errors,
                       "accumulate_system": accumulate}


def time_run(backend, tset, config):
    saved = {name: getattr(kernels, name) for name in ("tessellate", "segment_errors", "accumulate_system")}
    try:
        for name in saved:
            setattr(kernels, name, getattr(backend, name))
        return min(timeit.repeat(lambda: run(config, tset), number=1, repeat=3))
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-pattern", type=int, default=500)
    ap.add_argument("--resolution", type=int, default=5)
    ap.add_argument("--k", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    else:
        print("compiled backend not built; timing the Python fallback only")

    tset, _ = generate(SyntheticSpec(per_pattern=args.per_pattern, seed=0))
    grid = Grid.from_points(tset.all_points(), args.resolution)
    n_segs, jobs = workloads(tset, grid, args.k)
    print(f"{len(tset)} trajectories, {n_segs} segments, R={args.resolution}, k={args.k}")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    rows = [(label, [min(timeit.repeat(lambda: job(b), number=1, repeat=args.repeat)) for _, b in backends])
            for label, job in jobs.items()]
    config = ClusteringConfig(k=args.k, resolution=args.resolution)
    rows.append(("full run", [time_run(b, tset, config) for _, b in backends]))
    for label, times in rows:
        speedup = f"{times[0] / times[-1]:>9.1f}x" if len(times) > 1 else ""
        print(f"{label:<20}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + speedup)


if __name__ == "__main__":
    main()
