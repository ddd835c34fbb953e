import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from nccc.minplus import CumulativeFunction
from nccc.oracle import PacketTrace


def random_cumulative(rng: np.random.Generator, n_max: int = 20, horizon: float = 1.0,
                      rate_scale: float = 10.0, jump_scale: float = 5.0, p_jump: float = 0.4,
                      p_flat: float = 0.2) -> CumulativeFunction:
    """Random non-decreasing piecewise-linear function with jumps and plateaus."""
    n = int(rng.integers(1, n_max + 1))
    t = np.concatenate(([0.0], np.sort(rng.uniform(0, horizon, n - 1))))
    t = np.unique(t)
    slopes = rng.exponential(rate_scale, t.size) * (rng.random(t.size) > p_flat)
    jumps = rng.exponential(jump_scale, t.size) * (rng.random(t.size) < p_jump)
    y = np.empty(t.size)
    acc = 0.0
    for k in range(t.size):
        if k:
            acc += slopes[k - 1] * (t[k] - t[k - 1])
        acc += jumps[k]
        y[k] = acc
    return CumulativeFunction(t, y, slopes, horizon)


@st.composite
def cumulative_functions(draw, horizon: float = 1.0, n_max: int = 8):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_cumulative(np.random.default_rng(seed), n_max=n_max, horizon=horizon)


def random_packet_traces(rng: np.random.Generator, n_flows: int, n_packets: int, horizon: float,
                         size_max: float = 12000.0, grid: float | None = None) -> list[PacketTrace]:
    """Random per-flow packet arrivals; ``grid`` snaps times so that
    simultaneous arrivals across flows actually occur."""
    owner = rng.integers(0, n_flows, n_packets)
    times = rng.uniform(0, horizon * 0.8, n_packets)
    if grid:
        times = np.round(times / grid) * grid
    sizes = rng.uniform(0.1, 1.0, n_packets) * size_max
    traces = []
    for i in range(n_flows):
        sel = np.flatnonzero(owner == i)
        order = sel[np.argsort(times[sel], kind="stable")]
        traces.append(PacketTrace([(float(times[j]), float(sizes[j])) for j in order]))
    return traces


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
