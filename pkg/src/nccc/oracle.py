"""Brute-force references used by the tests.

Nothing here shares code paths with the envelope convolution or the FIFO
demultiplexer; the functions only evaluate cumulative functions pointwise.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .minplus import CumulativeFunction


def grid_convolve(f, g, n_points: int = 1000, horizon: float | None = None, refine: bool = False):
    """Sampled ``inf_s f(s) + g(t - s)`` on a uniform grid.

    Returns ``(ts, values)``.  On the plain grid the result upper-bounds the
    exact convolution with error at most ``max_slope * step``.  With
    ``refine=True`` every sample additionally tries the breakpoints of both
    operands and their one-sided limits, which makes it exact.
    """
    if n_points < 100:
        raise ValueError("grid oracle needs at least 100 points")
    if horizon is None:
        horizon = min(f.horizon, g.horizon)
    ts = np.linspace(0.0, horizon, n_points)
    F = np.asarray(f(ts))
    G = np.asarray(g(ts))
    out = np.empty(n_points)
    for k in range(n_points):
        out[k] = np.min(F[: k + 1] + G[k::-1])
    if refine:
        out = np.minimum(out, exact_convolve_at(f, g, ts))
    return ts, out


def exact_convolve_at(f, g, ts) -> np.ndarray:
    """Definitional infimum evaluated at each ``t`` by enumerating the points
    where ``s -> f(s) + g(t - s)`` can change slope or jump."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    T = ts[:, None]
    n = ts.size
    cand = np.concatenate(
        (np.zeros((n, 1)), T, np.broadcast_to(f.t, (n, f.t.size)), T - g.t[None, :]), axis=1
    )
    ok = (cand >= 0) & (cand <= T)
    c = np.clip(cand, 0.0, T)
    fc, gc = f(c), g(T - c)
    # one-sided limits: s -> c+ needs c < t, s -> c- needs c > 0
    from_right = f.right_limit(c) + gc
    from_left = fc + g.right_limit(T - c)
    vals = np.minimum(fc + gc, np.where(c < T, from_right, np.inf))
    vals = np.minimum(vals, np.where(c > 0, from_left, np.inf))
    out = np.min(np.where(ok, vals, np.inf), axis=1)
    return np.where(ts <= 0, 0.0, out)


# packet-level FIFO ---------------------------------------------------------

@dataclass
class PacketTrace:
    """Packets of one flow as ``(arrival_time, size_bits)`` pairs."""

    packets: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        times = [p[0] for p in self.packets]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("arrival times must be non-decreasing")
        if any(p[1] <= 0 for p in self.packets):
            raise ValueError("packet sizes must be positive")

    def arrival_function(self, horizon: float) -> CumulativeFunction:
        t, y, s = [0.0], [0.0], [0.0]
        acc = 0.0
        for a, b in self.packets:
            acc += b
            if a <= 0.0:
                y[0] = acc
            elif a == t[-1]:
                y[-1] = acc
            else:
                t.append(a)
                y.append(acc)
                s.append(0.0)
        return CumulativeFunction(t, y, s, horizon)


@dataclass
class FifoResult:
    # departures[i] = list of (departure_time, size) per flow, in FIFO order
    departures: list[list[tuple[float, float]]]
    order: list[tuple[int, float, float, float]]  # (flow, arrival, start, finish)

    def cumulative(self, flow: int, t, inclusive: bool = False) -> np.ndarray:
        """Bits of ``flow`` fully received in ``[0, t)``, or in ``[0, t]``
        with ``inclusive``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        fin = np.array([d for d, _ in self.departures[flow]])
        sz = np.array([b for _, b in self.departures[flow]])
        if fin.size == 0:
            return np.zeros(t.size)
        csum = np.concatenate(([0.0], np.cumsum(sz)))
        return csum[np.searchsorted(fin, t, side="right" if inclusive else "left")]

    def aggregate(self, t, inclusive: bool = False) -> np.ndarray:
        return sum(self.cumulative(i, t, inclusive) for i in range(len(self.departures)))


def packet_fifo_sim(traces: list[PacketTrace], rate: float, delta_r: float = 0.0) -> FifoResult:
    """Non-preemptive single-server FIFO at ``rate``; simultaneous arrivals are
    served in ascending flow index.  ``delta_r`` is carried for the ack times
    but does not affect service."""
    heap = []
    for i, tr in enumerate(traces):
        for j, (a, b) in enumerate(tr.packets):
            heapq.heappush(heap, (a, i, j, b))
    free_at = 0.0
    deps: list[list[tuple[float, float]]] = [[] for _ in traces]
    order = []
    while heap:
        a, i, j, b = heapq.heappop(heap)
        start = max(a, free_at)
        finish = start + b / rate
        free_at = finish
        deps[i].append((finish, b))
        order.append((i, a, start, finish))
    total = sum(b for tr in traces for _, b in tr.packets)
    got = sum(b for d in deps for _, b in d)
    if abs(total - got) > 1e-6:
        raise AssertionError("FIFO oracle lost traffic")
    return FifoResult(deps, order)
