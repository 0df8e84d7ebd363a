import numpy as np
import pytest

from vfkm import kernels
from vfkm.grid import Grid
from vfkm.trajectory import Trajectory, TrajectorySet

BACKENDS = [kernels.python_backend]
if kernels.compiled_backend is not None:
    BACKENDS.append(kernels.compiled_backend)

_acceptance_lines = []


def record_acceptance(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else "")
    _acceptance_lines.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit("_", 1)[-1])
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    for name in ("tessellate", "segment_errors", "accumulate_system"):
        monkeypatch.setattr(kernels, name, getattr(request.param, name))
    return request.param


@pytest.fixture
def unit_grid():
    return Grid((0.0, 0.0), (1.0, 1.0), 2)


def straight_trajectory(tid, start, velocity, times):
    times = np.asarray(times, dtype=float)
    pts = np.asarray(start, dtype=float) + (times - times[0])[:, None] * np.asarray(velocity, dtype=float)
    return Trajectory(tid, pts, times)


def random_walks(n, rng, n_samples=(3, 12), box=1.0):
    trajs = []
    for i in range(n):
        m = int(rng.integers(*n_samples))
        pts = rng.uniform(0.05 * box, 0.95 * box, size=(m, 2))
        t = np.cumsum(rng.uniform(0.2, 1.5, size=m))
        trajs.append(Trajectory(f"w{i}", pts, t))
    return TrajectorySet(trajs)
