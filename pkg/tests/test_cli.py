import csv
import json
import re

import numpy as np
import pytest

from vfkm.cli import main
from vfkm.trajectory import read_trajectories


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def agreement(pred, truth):
    pred, truth = np.asarray(pred, int), np.asarray(truth, int)
    return max((pred == truth).mean(), (pred == 1 - truth).mean())


@pytest.fixture(scope="module")
def circles_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "circles.csv"
    assert main(["synthetic", "--per-pattern", "150", "--seed", "1", "-o", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def clustered(circles_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "k2"
    code = main(["cluster", str(circles_csv), "--k", "2", "--resolution", "3", "--lambda", "0.05",
                 "--seed", "7", "-o", str(out), "--plot"])
    assert code == 0
    return out


def test_synthetic_to_stdout(capsys):
    assert main(["synthetic", "--per-pattern", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# vfkm-synthetic") and "id,t,x,y,label" in out


def test_synthetic_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["synthetic", "--per-pattern", "30", "--seed", "4", "-o", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_synthetic_bad_range_is_usage_error(tmp_path, capsys):
    assert main(["synthetic", "--radius", "0.5:0.2", "-o", str(tmp_path / "x.csv")]) == 64
    with pytest.raises(SystemExit) as info:
        main(["synthetic", "--arc-deg", "abc"])
    assert info.value.code == 64


def test_cluster_recovers_labels(circles_csv, clustered):
    truth = {r["id"]: r["label"] for r in read_csv(circles_csv)}
    rows = read_csv(clustered / "assignments.csv")
    assert list(rows[0]) == ["id", "cluster"]
    assert agreement([r["cluster"] for r in rows], [truth[r["id"]] for r in rows]) == 1.0


def test_run_directory_contents(clustered):
    manifest = json.loads((clustered / "manifest.json").read_text())
    names = sorted(p.name for p in clustered.iterdir())
    assert names == manifest["outputs"]
    assert {"field_0.txt", "field_1.txt", "energy.jsonl", "plot.svg", "trajectories.csv"} <= set(names)
    assert manifest["seed"] == 7 and manifest["status"] == "converged"
    assert manifest["config"]["k"] == 2 and len(manifest["input"]["sha256"]) == 64
    assert manifest["input"]["metadata"]["seed"] == "1"
    t = manifest["timings"]
    assert all(0 <= t[phase] <= t["total"] for phase in ("fit", "eval", "assign"))
    lines = (clustered / "energy.jsonl").read_text().splitlines()
    assert len(lines) == manifest["iterations"] + 1
    rec = json.loads(lines[-1])
    assert set(rec) == {"iter", "E_total", "E_smooth", "E_fit", "cluster_sizes", "moved"}


def test_cluster_k1(circles_csv, tmp_path):
    out = tmp_path / "k1"
    assert main(["cluster", str(circles_csv), "--k", "1", "--resolution", "3", "-o", str(out)]) == 0
    assert {r["cluster"] for r in read_csv(out / "assignments.csv")} == {"0"}
    assert sorted(p.name for p in out.glob("field_*.txt")) == ["field_0.txt"]


def test_iteration_cap_exit_code(circles_csv, tmp_path):
    out = tmp_path / "capped"
    code = main(["cluster", str(circles_csv), "--k", "3", "--resolution", "3", "--max-iter", "1",
                 "-o", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    assert code == 2 and manifest["status"] == "max_iter"


def test_end_to_end_determinism(circles_csv, tmp_path):
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out in outs:
        assert main(["cluster", str(circles_csv), "--k", "3", "--resolution", "4", "--seed", "2",
                     "-o", str(out)]) in (0, 2)
    for name in ["assignments.csv", "field_0.txt", "field_1.txt", "field_2.txt"]:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_label_column_is_ignored(circles_csv, tmp_path):
    rows = read_csv(circles_csv)
    rng = np.random.default_rng(0)
    shuffled = rng.permutation([r["label"] for r in rows])
    alt = tmp_path / "shuffled.csv"
    with open(alt, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["id", "t", "x", "y", "label"])
        w.writeheader()
        for r, lab in zip(rows, shuffled):
            w.writerow({**r, "label": lab})
    outs = []
    for src, name in ((circles_csv, "a"), (alt, "b")):
        out = tmp_path / name
        assert main(["cluster", str(src), "--k", "2", "--resolution", "3", "-o", str(out)]) == 0
        outs.append(out)
    assert (outs[0] / "assignments.csv").read_bytes() == (outs[1] / "assignments.csv").read_bytes()


def test_subcluster_all_gives_sixteen_leaves(circles_csv, tmp_path):
    run_dir = tmp_path / "k4"
    assert main(["cluster", str(circles_csv), "--k", "4", "--resolution", "3", "-o", str(run_dir)]) in (0, 2)
    assert main(["subcluster", str(run_dir), "--cluster", "all", "--k", "4", "--resolution", "3"]) in (0, 2)
    leaves = read_csv(run_dir / "leaves.csv")
    assert len({r["label_path"] for r in leaves}) == 16
    assert all(re.fullmatch(r"[0-3]\.[0-3]", r["label_path"]) for r in leaves)
    original = read_trajectories(circles_csv).ids
    assert sorted(r["id"] for r in leaves) == sorted(original)
    sub = read_csv(run_dir / "sub_2" / "assignments.csv")
    assert list(sub[0]) == ["id", "label_path"]
    top = {r["id"]: r["cluster"] for r in read_csv(run_dir / "assignments.csv")}
    assert {top[r["id"]] for r in sub} == {"2"}


def test_subcluster_errors(clustered, tmp_path, capsys):
    assert main(["subcluster", str(clustered), "--cluster", "9", "--k", "2"]) == 64
    assert "empty" in capsys.readouterr().err
    assert main(["subcluster", str(tmp_path / "nope"), "--cluster", "0", "--k", "2"]) == 64


def test_plot_counts(tmp_path):
    data = tmp_path / "one.csv"
    data.write_text("id,t,x,y\nonly,0,0.1,0.1\nonly,1,0.5,0.3\nonly,2,0.9,0.4\n")
    run_dir = tmp_path / "one"
    assert main(["cluster", str(data), "--k", "1", "--resolution", "4", "-o", str(run_dir)]) == 0
    assert main(["plot", str(run_dir)]) == 0
    svg = (run_dir / "cluster_0.svg").read_text()
    assert svg.count("<polyline") == 1
    assert svg.count('<g class="glyph">') == 16
    first = svg
    assert main(["plot", str(run_dir)]) == 0
    assert (run_dir / "cluster_0.svg").read_text() == first


def test_zero_field_renders_dots(tmp_path):
    data = tmp_path / "still.csv"
    data.write_text("id,t,x,y\ns,0,0.1,0.1\ns,1,0.1,0.1\nq,0,0.9,0.9\nq,1,0.9,0.9\n")
    run_dir = tmp_path / "still"
    assert main(["cluster", str(data), "--k", "1", "--resolution", "3", "-o", str(run_dir)]) == 0
    assert main(["plot", str(run_dir)]) == 0
    svg = (run_dir / "cluster_0.svg").read_text()
    assert svg.count("<circle") == 9 and "<line" not in svg


def test_plot_of_subcluster_directory(circles_csv, tmp_path):
    run_dir = tmp_path / "k2"
    assert main(["cluster", str(circles_csv), "--k", "2", "--resolution", "3", "-o", str(run_dir)]) == 0
    assert main(["subcluster", str(run_dir), "--cluster", "1", "--k", "2", "--resolution", "3"]) in (0, 2)
    assert main(["plot", str(run_dir / "sub_1")]) == 0
    assert sorted(p.name for p in (run_dir / "sub_1").glob("*.svg")) == ["cluster_1.0.svg", "cluster_1.1.svg"]


def test_missing_input_and_dirs_are_usage_errors(tmp_path):
    assert main(["cluster", str(tmp_path / "missing.csv"), "--k", "2", "-o", str(tmp_path / "o")]) == 64
    assert main(["plot", str(tmp_path / "missing")]) == 64
    with pytest.raises(SystemExit) as info:
        main(["cluster", "x.csv", "-o", "out"])  # --k missing
    assert info.value.code == 64


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,t,x,y\na,0,0,0\na,zero,1,1\n")
    assert main(["cluster", str(bad), "--k", "1", "-o", str(tmp_path / "o")]) == 1
    assert "line 3" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_refuses_to_clobber_foreign_directory(circles_csv, tmp_path):
    out = tmp_path / "precious"
    out.mkdir()
    (out / "notes.txt").write_text("keep me")
    assert main(["cluster", str(circles_csv), "--k", "1", "--resolution", "3", "-o", str(out)]) == 64
    assert (out / "notes.txt").read_text() == "keep me"
    assert [p.name for p in tmp_path.iterdir()] == ["precious"]


def test_preprocessing_flags_recorded(tmp_path):
    data = tmp_path / "gappy.csv"
    data.write_text("id,t,x,y\n" + "".join(f"g,{t},{0.1 + 0.01 * t},0.5\n" for t in [0, 1, 2, 3, 40, 41, 42])
                    + "h,0,0.2,0.2\nh,1,0.3,0.3\n")
    out = tmp_path / "pp"
    assert main(["cluster", str(data), "--k", "1", "--resolution", "3", "--split-gaps", "2.5",
                 "--resample", "0.5", "-o", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["preprocess"]["split_gaps"] == 2.5
    ids = {r["id"] for r in read_csv(out / "assignments.csv")}
    assert ids == {"g#0", "g#1", "h"}
