import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from pantilt.geometry import RotationAxis

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_axis(rng, spread=0.5):
    d = rng.normal(size=3)
    return RotationAxis.normalized(d, rng.uniform(-spread, spread, size=3))


def scan_objective(axis, src, tgt, lo, hi, step):
    grid = np.arange(lo, hi + step / 2, step)
    rel = src - axis.center
    costs = np.empty(len(grid))
    for chunk in range(0, len(grid), 4096):
        angles = grid[chunk:chunk + 4096]
        rots = Rotation.from_rotvec(np.outer(angles, axis.direction))
        mats = rots.as_matrix()
        moved = np.einsum("gij,nj->gni", mats, rel) + axis.center
        costs[chunk:chunk + 4096] = np.sum((moved - tgt) ** 2, axis=(1, 2))
    return grid[int(np.argmin(costs))]


def brute_force_angle(axis, src, tgt):
    coarse = scan_objective(axis, src, tgt, -math.pi, math.pi, 1e-3)
    return scan_objective(axis, src, tgt, coarse - 2e-3, coarse + 2e-3, 1e-5)
