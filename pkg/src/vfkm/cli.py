"""Command-line interface: ``vfkm synthetic | cluster | subcluster | plot``.

Exit codes: 0 success (converged), 2 iteration cap reached, 1 data or I/O
error, 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict
from pathlib import Path

from vfkm import __version__, kernels
from vfkm.clustering import ClusteringConfig, RunState, run
from vfkm.errors import InvalidArgumentError, VFKMError
from vfkm.fieldops import load_field, write_field
from vfkm.plot import cluster_color, render_svg
from vfkm.synthetic import SyntheticSpec, write_synthetic
from vfkm.trajectory import preprocess, read_trajectories, write_trajectories

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITER = 2
EXIT_USAGE = 64

log = logging.getLogger("vfkm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _range(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    return lo, hi


def _add_run_flags(p, k_required=True):
    p.add_argument("--k", type=int, required=k_required, default=None if k_required else 4,
                   help="number of clusters")
    p.add_argument("--resolution", type=int, default=5, help="grid vertices per axis")
    p.add_argument("--lambda", dest="lam", type=float, default=0.05, help="smoothness weight in (0,1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--cg-tol", type=float, default=1e-9)
    p.add_argument("--assign-mode", choices=["weighted", "unweighted"], default="weighted")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vfkm", description="Vector-field k-means trajectory clustering")
    parser.add_argument("--version", action="version", version=f"vfkm {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synthetic", help="generate the two-circles dataset")
    d = SyntheticSpec()
    p.add_argument("--per-pattern", type=int, default=d.per_pattern)
    p.add_argument("--arc-deg", type=_range, default=d.arc_deg, metavar="LO:HI")
    p.add_argument("--radius", type=_range, default=d.radius, metavar="LO:HI")
    p.add_argument("--center-offset", type=float, default=d.center_offset)
    p.add_argument("--noise", type=float, default=d.noise)
    p.add_argument("--dt", type=float, default=d.dt)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--output", "-o", type=Path, help="output CSV (default: stdout)")

    p = sub.add_parser("cluster", help="cluster a trajectory CSV")
    p.add_argument("input", type=Path)
    _add_run_flags(p)
    p.add_argument("--split-gaps", type=float, default=None, metavar="FACTOR")
    p.add_argument("--resample", type=float, default=None, metavar="DT")
    p.add_argument("--output", "-o", type=Path, required=True, help="run directory")
    p.add_argument("--plot", action="store_true", help="also write plot.svg")

    p = sub.add_parser("subcluster", help="re-cluster clusters of a previous run")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--cluster", required=True, help="cluster label to split, or 'all'")
    _add_run_flags(p)

    p = sub.add_parser("plot", help="render one SVG per cluster of a run")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--output", "-o", type=Path, default=None, help="directory (default: run dir)")
    return parser


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _commit(stage: Path, out: Path):
    """Move a fully written staging directory into place."""
    if out.exists():
        if any(out.iterdir()) and not (out / "manifest.json").exists():
            shutil.rmtree(stage)
            raise UsageError(f"{out} exists and is not a vfkm run directory")
        old = out.with_name(f".{out.name}.old-{os.getpid()}")
        os.replace(out, old)
        os.replace(stage, out)
        shutil.rmtree(old)
    else:
        os.replace(stage, out)


def _config_from(args) -> ClusteringConfig:
    return ClusteringConfig(k=args.k, resolution=args.resolution, lam=args.lam,
                            max_iter=args.max_iter, cg_tol=args.cg_tol, seed=args.seed,
                            assign_mode=args.assign_mode)


def _write_run(state: RunState, out: Path, manifest: dict, label_prefix: str = "",
               plot: bool = False):
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.stage-", dir=out.parent))
    try:
        files = []

        def target(name):
            files.append(name)
            return stage / name

        with open(target("trajectories.csv"), "w", encoding="utf-8", newline="") as fh:
            write_trajectories(state.trajectories, fh)
        column = "cluster" if not label_prefix else "label_path"
        with open(target("assignments.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(f"id,{column}\n")
            for tid, lab in zip(state.trajectories.ids, state.assignment.labels):
                fh.write(f"{tid},{label_prefix}{int(lab)}\n")
        for j, field in enumerate(state.fields):
            with open(target(f"field_{j}.txt"), "w", encoding="utf-8") as fh:
                write_field(field, fh)
        with open(target("energy.jsonl"), "w", encoding="utf-8") as fh:
            for rec in state.history:
                fh.write(json.dumps(rec.to_json()) + "\n")
        if plot:
            colors = [cluster_color(int(j)) for j in state.assignment.labels]
            svg = render_svg(state.grid, state.trajectories, colors, state.fields,
                             [cluster_color(j) for j in range(len(state.fields))])
            target("plot.svg").write_text(svg, encoding="utf-8")
        manifest = dict(manifest)
        manifest.update({
            "tool": "vfkm",
            "version": __version__,
            "backend": kernels.BACKEND,
            "config": asdict(state.config),
            "seed": state.seed,
            "status": state.status,
            "iterations": state.iterations,
            "empty_cluster_repairs": state.repairs,
            "label_prefix": label_prefix,
            "grid": {"resolution": state.grid.resolution, "bbox_min": list(state.grid.bbox_min),
                     "bbox_max": list(state.grid.bbox_max)},
            "n_trajectories": len(state.trajectories),
            "n_segments": len(state.segments),
            "cluster_sizes": state.assignment.sizes().tolist(),
            "final_energy": state.history[-1].E_total,
            "timings": state.timings,
            "outputs": sorted(files + ["manifest.json"]),
        })
        with open(stage / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    _commit(stage, out)


def cmd_synthetic(args) -> int:
    spec = SyntheticSpec(per_pattern=args.per_pattern, arc_deg=args.arc_deg, radius=args.radius,
                         center_offset=args.center_offset, noise=args.noise, dt=args.dt,
                         seed=args.seed)
    if args.output is None:
        write_synthetic(spec, sys.stdout)
        return EXIT_OK
    buf = io.StringIO()
    write_synthetic(spec, buf)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    tmp = args.output.with_name(f".{args.output.name}.tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    os.replace(tmp, args.output)
    return EXIT_OK


def cmd_cluster(args) -> int:
    if not args.input.is_file():
        raise UsageError(f"input file {args.input} not found")
    t0 = time.perf_counter()
    raw = read_trajectories(args.input)
    tset = preprocess(raw, args.split_gaps, args.resample)
    if len(tset) == 0:
        raise UsageError("no usable trajectories after preprocessing")
    config = _config_from(args)
    state = run(config, tset)
    manifest = {
        "command": "cluster",
        "input": {
            "path": str(args.input),
            "sha256": _sha256(args.input),
            "n_trajectories_read": len(raw),
            "metadata": raw.metadata,
        },
        "preprocess": {"split_gaps": args.split_gaps, "resample": args.resample,
                       "dropped": dict(tset.dropped)},
        "wall_time": time.perf_counter() - t0,
    }
    _write_run(state, args.output, manifest, plot=args.plot)
    print(f"{state.status} after {state.iterations} iterations; "
          f"cluster sizes {state.assignment.sizes().tolist()}; wrote {args.output}")
    return EXIT_OK if state.converged else EXIT_MAX_ITER


def _read_labels(run_dir: Path) -> tuple[list[str], list[str]]:
    path = run_dir / "assignments.csv"
    if not path.is_file():
        raise UsageError(f"{run_dir} has no assignments.csv; not a vfkm run directory")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return [r[0] for r in rows[1:]], [r[1] for r in rows[1:]]


def _load_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    if not path.is_file():
        raise UsageError(f"{run_dir} has no manifest.json; not a vfkm run directory")
    return json.loads(path.read_text(encoding="utf-8"))


def _write_leaves(run_dir: Path):
    ids, labels = _read_labels(run_dir)
    leaf = dict(zip(ids, labels))
    for label in sorted(set(labels)):
        sub = run_dir / f"sub_{label}"
        if (sub / "assignments.csv").is_file():
            leaf.update(zip(*_read_labels(sub)))
    tmp = run_dir / ".leaves.csv.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write("id,label_path\n")
        for tid in ids:
            fh.write(f"{tid},{leaf[tid]}\n")
    os.replace(tmp, run_dir / "leaves.csv")


def cmd_subcluster(args) -> int:
    run_dir = args.run_dir
    if not run_dir.is_dir():
        raise UsageError(f"run directory {run_dir} not found")
    _load_manifest(run_dir)
    ids, labels = _read_labels(run_dir)
    tset = read_trajectories(run_dir / "trajectories.csv")
    present = sorted(set(labels), key=lambda s: [int(p) for p in s.split(".")])
    targets = present if args.cluster == "all" else [args.cluster]
    config = _config_from(args)
    status = EXIT_OK
    for label in targets:
        members = {tid for tid, lab in zip(ids, labels) if lab == label}
        if not members:
            raise UsageError(f"cluster {label!r} is empty or does not exist")
        sub_set = tset.subset([i for i, tid in enumerate(tset.ids) if tid in members])
        state = run(config, sub_set)
        manifest = {
            "command": "subcluster",
            "parent": {"run_dir": str(run_dir), "cluster": label,
                       "trajectories_sha256": _sha256(run_dir / "trajectories.csv")},
        }
        _write_run(state, run_dir / f"sub_{label}", manifest, label_prefix=f"{label}.")
        print(f"cluster {label}: {state.status} after {state.iterations} iterations; "
              f"sizes {state.assignment.sizes().tolist()}")
        if not state.converged:
            status = EXIT_MAX_ITER
    _write_leaves(run_dir)
    return status


def cmd_plot(args) -> int:
    run_dir = args.run_dir
    if not run_dir.is_dir():
        raise UsageError(f"run directory {run_dir} not found")
    manifest = _load_manifest(run_dir)
    prefix = manifest.get("label_prefix", "")
    ids, labels = _read_labels(run_dir)
    tset = read_trajectories(run_dir / "trajectories.csv")
    by_id = {tr.id: tr for tr in tset}
    out = args.output or run_dir
    out.mkdir(parents=True, exist_ok=True)
    k = manifest["config"]["k"]
    for j in range(k):
        field_path = run_dir / f"field_{j}.txt"
        if not field_path.is_file():
            raise UsageError(f"missing {field_path}")
        field = load_field(field_path)
        label = f"{prefix}{j}"
        trajs = [by_id[tid] for tid, lab in zip(ids, labels) if lab == label]
        color = cluster_color(j)
        svg = render_svg(field.grid, trajs, [color] * len(trajs), [field], [color],
                         title=f"cluster {label}")
        (out / f"cluster_{label}.svg").write_text(svg, encoding="utf-8")
    print(f"wrote {k} SVG file(s) to {out}")
    return EXIT_OK


COMMANDS = {
    "synthetic": cmd_synthetic,
    "cluster": cmd_cluster,
    "subcluster": cmd_subcluster,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"vfkm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VFKMError, OSError) as exc:
        print(f"vfkm: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
