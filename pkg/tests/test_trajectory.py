import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import straight_trajectory
from vfkm.errors import MalformedTrajectoryError, OutOfDomainError, ParseError
from vfkm.grid import Grid
from vfkm.trajectory import (
    Trajectory,
    TrajectorySet,
    build_segments,
    parse_trajectories,
    preprocess,
    resample_min_interval,
    split_on_gaps,
    write_trajectories,
)


def traj_with_times(times, tid="a"):
    times = np.asarray(times, dtype=float)
    return Trajectory(tid, np.column_stack([times, np.zeros_like(times)]), times)


def test_parse_single_trajectory():
    ts = parse_trajectories("id,t,x,y\na,0,0,0\na,1,1,0\n")
    assert len(ts) == 1
    assert ts[0].timespan == 1.0
    np.testing.assert_array_equal(ts[0].points, [[0, 0], [1, 0]])


def test_parse_sorts_by_time_and_ignores_extra_columns():
    shuffled = "# note=hello\nid,t,x,y,label\nb,2,5,5,1\na,1,1,0,0\nb,0,4,4,1\na,0,0,0,0\n"
    ordered = "id,t,x,y\na,0,0,0\na,1,1,0\nb,0,4,4\nb,2,5,5\n"
    s1, s2 = parse_trajectories(shuffled), parse_trajectories(ordered)
    assert sorted(s1.ids) == s2.ids
    for tid in s2.ids:
        assert s1[s1.ids.index(tid)] == s2[s2.ids.index(tid)]
    assert s1.metadata == {"note": "hello"}


def test_parse_drops_single_sample_ids():
    ts = parse_trajectories("id,t,x,y\na,0,0,0\na,1,1,0\nlonely,0,3,3\n")
    assert ts.ids == ["a"]
    assert ts.dropped["single_sample"] == 1


@pytest.mark.parametrize("text,line", [
    ("id,t,x,y\na,0,0,0\na,one,1,0\n", 3),
    ("id,t,x,y\na,0,0\n", 2),
    ("id,t,x\na,0,0\n", 1),
    ("id,t,x,y\na,0,0,nan\n", 2),
])
def test_parse_errors_carry_line_number(text, line):
    with pytest.raises(ParseError) as info:
        parse_trajectories(text)
    assert info.value.line == line


def test_parse_rejects_duplicate_timestamps():
    with pytest.raises(MalformedTrajectoryError, match="duplicate"):
        parse_trajectories("id,t,x,y\na,0,0,0\na,0,1,0\n")


def test_write_parse_round_trip():
    rng = np.random.default_rng(0)
    trajs = [Trajectory(f"t{i}", rng.normal(size=(4, 2)), np.cumsum(rng.uniform(0.1, 1, 4)))
             for i in range(3)]
    buf = io.StringIO()
    write_trajectories(trajs, buf)
    back = parse_trajectories(buf.getvalue())
    assert list(back) == trajs


def test_split_on_gaps_examples():
    pieces = split_on_gaps(traj_with_times([0, 1, 2, 3, 13]))
    assert len(pieces) == 1
    np.testing.assert_array_equal(pieces[0].times, [0, 1, 2, 3])
    assert pieces[0].id == "a#0"

    uniform = traj_with_times([0, 1, 2, 3, 4])
    assert split_on_gaps(uniform) == [uniform]

    boundary = traj_with_times([0, 1, 2, 4.5])
    assert split_on_gaps(boundary) == [boundary]


def test_split_accounting_in_preprocess():
    ts = TrajectorySet([traj_with_times([0, 1, 2, 3, 13])])
    out = preprocess(ts, split_factor=2.5)
    assert len(out) == 1 and out.dropped["gap_split_samples"] == 1


def test_resample_examples():
    tr = traj_with_times([0, 1, 2, 3, 4])
    np.testing.assert_array_equal(resample_min_interval(tr, 2).times, [0, 2, 4])
    assert resample_min_interval(tr, 0.5) is tr
    np.testing.assert_array_equal(resample_min_interval(traj_with_times([0, 1]), 5).times, [0, 1])


gap_lists = st.lists(st.floats(0.01, 20.0), min_size=1, max_size=30)


@settings(max_examples=200, deadline=None)
@given(gap_lists, st.floats(0.05, 10.0))
def test_resample_is_idempotent(gaps, dt):
    tr = traj_with_times(np.concatenate([[0.0], np.cumsum(gaps)]))
    once = resample_min_interval(tr, dt)
    assert once is not None
    assert resample_min_interval(once, dt) == once


@settings(max_examples=200, deadline=None)
@given(gap_lists)
def test_split_leaves_no_gap_above_original_threshold(gaps):
    tr = traj_with_times(np.concatenate([[0.0], np.cumsum(gaps)]))
    threshold = 2.5 * np.median(np.diff(tr.times))
    pieces = split_on_gaps(tr)
    for p in pieces:
        assert (np.diff(p.times) <= threshold).all()
    # every sample is either kept or belongs to a discarded single-sample piece
    kept = sum(len(p) for p in pieces)
    assert len(tr) - kept == sum(1 for p in np.split(tr.times, np.flatnonzero(np.diff(tr.times) > threshold) + 1) if len(p) < 2)


def test_split_is_idempotent_on_clean_tracks():
    tr = traj_with_times([0, 1, 2, 3, 30, 31, 32, 33, 34])
    once = [p for piece in split_on_gaps(tr) for p in [piece]]
    twice = [q for p in once for q in split_on_gaps(p)]
    assert twice == once


def test_build_segments_weights_and_velocity():
    grid = Grid((-1.0, -1.0), (10.0, 10.0), 4)
    a = straight_trajectory("a", (0, 0), (1, 0), [0, 1, 2])
    b = straight_trajectory("b", (0, 1), (0.5, 0.5), [0, 3])
    segs = build_segments(TrajectorySet([a, b]), grid)
    assert segs.total_time == 5.0
    assert abs(segs.weight.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(segs.trajectory_weight, [0.4, 0.6])
    first = segs.segment_indices([0])
    np.testing.assert_allclose(segs.velocity[first], np.tile([1.0, 0.0], (len(first), 1)))
    # the first unit-duration segment of ``a`` carries weight 1/5 in total
    parent0 = segs.t1[first] <= 1.0
    assert abs(segs.weight[first][parent0].sum() - 0.2) <= 1e-12


def test_split_segment_halves_weights():
    grid = Grid((0.0, 0.0), (2.0, 2.0), 2)
    a = straight_trajectory("a", (0.2, 1.5), (1.0, 0.0), [0.0, 1.6])   # crosses the diagonal
    b = straight_trajectory("b", (0.1, 0.1), (0.0, 0.1), [0.0, 3.4])
    segs = build_segments(TrajectorySet([a, b]), grid)
    first = segs.segment_indices([0])
    assert len(first) == 2
    np.testing.assert_allclose(segs.weight[first], [0.3 / 5, 1.3 / 5])


def test_build_segments_out_of_domain_names_trajectory():
    grid = Grid((0.0, 0.0), (1.0, 1.0), 3)
    bad = straight_trajectory("rogue", (0.5, 0.5), (1.0, 0.0), [0, 1])
    with pytest.raises(OutOfDomainError, match="rogue"):
        build_segments(TrajectorySet([bad]), grid)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_segment_invariants(seed, R):
    from conftest import random_walks

    rng = np.random.default_rng(seed)
    tset = random_walks(int(rng.integers(1, 6)), rng)
    grid = Grid.from_points(tset.all_points(), R)
    segs = build_segments(tset, grid)
    assert abs(segs.weight.sum() - 1.0) <= 1e-9
    assert (segs.t1 > segs.t0).all()
    for n, tr in enumerate(tset):
        sel = segs.segment_indices([n])
        assert abs(segs.weight[sel].sum() - tr.timespan / tset.total_time) <= 1e-12
        # sub-segment velocity equals the displacement rate of the sub-segment
        disp = (segs.p1[sel] - segs.p0[sel]) / (segs.t1[sel] - segs.t0[sel])[:, None]
        np.testing.assert_allclose(disp, segs.velocity[sel], atol=1e-8, rtol=1e-6)
    # barycentric rows reproduce the endpoints
    verts = grid.vertices[segs.verts]
    np.testing.assert_allclose(np.einsum("mi,mic->mc", segs.w0, verts), segs.p0, atol=1e-10)
    np.testing.assert_allclose(np.einsum("mi,mic->mc", segs.w1, verts), segs.p1, atol=1e-10)
