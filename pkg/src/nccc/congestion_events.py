"""Congestion signals (acks, timeouts, ECN/RED, PFC) and the coordinate shifts
that restore min-plus linearity after each event."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .minplus import (
    EPS_T,
    CumulativeFunction,
    MonotonicityError,
    PiecewiseLinear,
    _tol,
    delay,
    first_at_or_above,
    first_below,
    first_crossing_below,
    lower_pseudo_inverse,
    shift,
    stitch as _stitch,
)


class ConfigurationError(ValueError):
    pass


# acknowledgments and timeouts ---------------------------------------------

def ack_function(D: CumulativeFunction, delta_r: float, i_max: float | None = None) -> CumulativeFunction:
    """Cumulative acknowledgments ``D(t - delta_r)``, optionally quantized to
    whole packets of ``i_max`` bits."""
    fluid = delay(D, delta_r)
    if i_max is None:
        return fluid
    if i_max <= 0:
        raise ConfigurationError("packet size must be positive")
    n = int(math.floor(fluid.final_value() / i_max + 1e-12))
    if n == 0:
        return CumulativeFunction([0.0], [0.0], [0.0], D.horizon)
    levels = i_max * np.arange(1, n + 1)
    times = np.asarray(lower_pseudo_inverse(fluid)(levels))
    # a step reached exactly at time x is counted from x+ (left-continuity)
    t = np.concatenate(([0.0], times))
    y = np.concatenate(([0.0], levels))
    keep = np.concatenate(([True], t[1:] > 0))
    t, y = t[keep], y[keep]
    if t.size > 1 and t[1] <= 0:
        t, y = t[1:], y[1:]
    ut, idx = np.unique(t, return_index=True)
    last = np.append(idx[1:] - 1, t.size - 1)
    return CumulativeFunction(ut, y[last], np.zeros(ut.size), D.horizon)


def next_timeout(admitted, D, delta_r: float, tau_o: float, t_from: float, t_until: float | None = None):
    """Earliest ``t > t_from`` with ``D(t - delta_r) < admitted(t - tau_o)``."""
    if tau_o <= delta_r:
        raise ConfigurationError(f"timeout {tau_o:g} must exceed the feedback delay {delta_r:g}")
    return first_crossing_below(delay(D, delta_r), delay(admitted, tau_o), t_from, t_until)


# ECN / RED -----------------------------------------------------------------

_BLOCK = 1 << 16


@lru_cache(maxsize=256)
def _uniform_block(seed: int, block: int) -> np.ndarray:
    return np.random.default_rng([seed, block]).random(_BLOCK)


def packet_uniforms(seed: int, first: int, last: int) -> np.ndarray:
    """Uniform draws for packet indices ``first..last-1``; each index always
    maps to the same draw, so recomputing the future never reshuffles the past."""
    if last <= first:
        return np.empty(0)
    out = []
    for b in range(first // _BLOCK, (last - 1) // _BLOCK + 1):
        lo = max(first, b * _BLOCK) - b * _BLOCK
        hi = min(last, (b + 1) * _BLOCK) - b * _BLOCK
        out.append(_uniform_block(seed, b)[lo:hi])
    return np.concatenate(out)


@dataclass
class EcnState:
    k_min: float
    k_max: float
    p_max: float
    delta_tau_ecn: float
    rng_seed: int = 0
    i_max: float = 8e3
    t_underline: float = -math.inf
    red: bool = True

    def __post_init__(self):
        if not 0 < self.p_max <= 1:
            raise ConfigurationError("p_max must lie in (0, 1]")
        if not self.k_min < self.k_max:
            raise ConfigurationError("k_min must be below k_max")
        if self.delta_tau_ecn < 0:
            raise ConfigurationError("notification gap must be non-negative")

    def mark_probability(self, x):
        x = np.asarray(x, dtype=float)
        p = self.p_max * (x - self.k_min) / (self.k_max - self.k_min)
        return np.where(x >= self.k_max, 1.0, np.where(x <= self.k_min, 0.0, p))


def _threshold_intervals(B: PiecewiseLinear, level: float, t_from: float, t_until: float):
    """Closed intervals ``[a, b]`` after ``t_from`` on which ``B >= level``."""
    out = []
    t = max(t_from, 0.0)
    while t < t_until:
        a = first_at_or_above(B, level, t, t_until)
        if a is None:
            break
        b = first_below(B, a, level, t_until)
        b = t_until if b is None else b
        out.append((a, b))
        # a touching point (a == b) must not stall the scan
        t = b if b > a + EPS_T else b + 10 * EPS_T
    return out


def _red_marks(B: PiecewiseLinear, admitted: CumulativeFunction, state: EcnState, t_from: float, t_until: float):
    """Times of RED-marked packets in ``(t_from, t_until]`` (sorted)."""
    if admitted is None or not state.red:
        return np.empty(0)
    a0, a1 = admitted(max(t_from, 0.0)), admitted(t_until)
    first = int(math.floor(a0 / state.i_max)) + 1
    last = int(math.floor(a1 / state.i_max)) + 1
    if last <= first:
        return np.empty(0)
    marks = []
    chunk = 1 << 15
    inv = lower_pseudo_inverse(admitted)
    for lo in range(first, last, chunk):
        hi = min(last, lo + chunk)
        k = np.arange(lo, hi)
        tk = np.asarray(inv(k * state.i_max))
        x = np.asarray(B.right_limit(tk))
        zone = (x > state.k_min) & (x < state.k_max)
        if not zone.any():
            continue
        u = packet_uniforms(state.rng_seed, lo, hi)
        hit = zone & (u < state.mark_probability(x))
        hit &= tk > t_from
        if hit.any():
            marks.append(tk[hit])
            break  # only the earliest mark matters to the caller's loop
    return np.concatenate(marks) if marks else np.empty(0)


def next_notification(B: PiecewiseLinear, state: EcnState, t_until: float, admitted=None):
    """Next notification time given ``state.t_underline`` (not mutated).

    The mark set is ``{B >= k_max}`` plus the RED-marked packets of
    ``admitted``.  The first mark strictly after ``t_underline`` triggers a
    notification at ``max(mark, t_underline + gap)``; a mark exactly at
    ``t_underline`` is the one already notified."""
    tu = state.t_underline
    fresh = tu == -math.inf
    start = 0.0 if fresh else max(tu, 0.0)
    cands = []
    for a, b in _threshold_intervals(B, state.k_max, start, t_until):
        if fresh:
            cands.append(a)
            break
        if b > tu + EPS_T:
            cands.append(max(a, tu))
            break
    red = _red_marks(B, admitted, state, -1.0 if fresh else tu, min(cands) if cands else t_until)
    if red.size:
        cands.append(float(red[0]))
    if not cands:
        return None
    m = min(cands)
    n = m if fresh else max(m, tu + state.delta_tau_ecn)
    return n if n <= t_until else None


def ecn_mark_times(B: PiecewiseLinear, state: EcnState, horizon: float, admitted=None) -> list[float]:
    """All notification times over ``[0, horizon]`` for a fixed backlog
    function; updates ``state.t_underline``."""
    out = []
    while True:
        n = next_notification(B, state, horizon, admitted)
        if n is None:
            break
        if out and n < out[-1] + state.delta_tau_ecn - EPS_T:
            raise AssertionError("notification spacing violated")
        out.append(n)
        state.t_underline = n
    return out


# PFC -------------------------------------------------------------------------

@dataclass
class PfcState:
    x_off: float
    x_on: float
    line_rate: float
    delta_r: float
    intervals: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.x_on < self.x_off:
            raise ConfigurationError("x_on must be below x_off")

    @property
    def pause_length(self) -> float:
        return (self.x_off - self.x_on) / self.line_rate


def pfc_schedule(B: PiecewiseLinear, state: PfcState, t_from: float, t_until: float | None = None):
    """Next ``(t_P, t_R)`` with ``t_P = inf{s >= t_from : B(s - delta_r) > x_off}``."""
    if t_until is None:
        t_until = B.horizon + state.delta_r
    lagged = delay(B, state.delta_r)
    if float(lagged.right_limit(t_from)) > state.x_off + float(_tol(state.x_off)):
        t_p = max(t_from, 0.0)
    else:
        t_p = first_at_or_above(lagged, state.x_off, t_from, t_until, strict=True)
        if t_p is None:
            return None
    return t_p, t_p + state.pause_length


def pfc_resume(Bs, state: PfcState, t_p: float, t_cap: float) -> tuple[float, list[tuple[float, float]]]:
    """Resume time of a pause starting at ``t_p``: the pause is re-armed every
    ``pause_length`` while any backlog in ``Bs`` still exceeds ``x_off`` one
    feedback delay earlier.  Returns the resume time and the 2-level log of
    sub-intervals."""
    L = state.pause_length
    subs = []
    t = t_p
    while True:
        t_r = t + L
        subs.append((t, t_r))
        if t_r >= t_cap:
            return t_r, subs
        still = any(float(b(t_r - state.delta_r)) > state.x_off + float(_tol(state.x_off)) for b in Bs)
        if not still:
            return t_r, subs
        t = t_r


# coordinate shifts ---------------------------------------------------------

SHIFT_KINDS = ("timeout", "additive-increase", "flight-complete", "cnp", "pause", "resume")


@dataclass(frozen=True)
class ShiftRecord:
    t_origin: float
    y_origin: float
    kind: str

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise ValueError(f"unknown shift kind {self.kind!r}")


def shift_after_timeout(A: CumulativeFunction, D: CumulativeFunction, t_to: float, delta_r: float):
    """Remaining source after a Go-Back-N timeout: origin ``(t_to, D(t_to - delta_r))``."""
    y0 = float(D(t_to - delta_r))
    if y0 > float(A(t_to)) + float(_tol(y0)):
        raise MonotonicityError("acknowledged traffic exceeds generated traffic")
    return shift(A, t_to, y0), ShiftRecord(t_to, y0, "timeout")


def shift_after_admit(A: CumulativeFunction, admitted: CumulativeFunction, t_event: float, kind: str = "additive-increase"):
    """Remaining source with origin ``(t_event, admitted(t_event))``; the not yet
    admitted traffic becomes an initial burst."""
    y0 = float(admitted(t_event))
    if y0 > float(A(t_event)) + float(_tol(y0)):
        raise MonotonicityError("admitted traffic exceeds generated traffic")
    return shift(A, t_event, y0), ShiftRecord(t_event, y0, kind)


def stitch(global_fn: CumulativeFunction, local_fn: CumulativeFunction, record: ShiftRecord) -> CumulativeFunction:
    return _stitch(global_fn, local_fn, record.t_origin, record.y_origin)


# event log -------------------------------------------------------------------

EVENT_KINDS = (
    "timeout", "additive-increase", "cnp", "ecn-mark", "pause", "resume",
    "window-update", "rtt-update",
)


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    flow_id: int
    detail: str = ""


class EventLog:
    """Time-ordered congestion events."""

    def __init__(self):
        self._events: list[Event] = []

    def add(self, t: float, kind: str, flow_id: int = -1, detail: str = "") -> None:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        self._events.append(Event(float(t), kind, int(flow_id), detail))

    def __iter__(self):
        return iter(sorted(self._events, key=lambda e: (e.t, e.flow_id)))

    def __len__(self):
        return len(self._events)

    def of_kind(self, kind: str, flow_id: int | None = None) -> list[Event]:
        return [e for e in self if e.kind == kind and (flow_id is None or e.flow_id == flow_id)]

    def times(self, kind: str, flow_id: int | None = None) -> np.ndarray:
        return np.array([e.t for e in self.of_kind(kind, flow_id)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "event_kind", "flow_id", "detail"])
        for e in self:
            w.writerow([repr(e.t), e.kind, e.flow_id, e.detail])
        return buf.getvalue()


__all__ = [
    "ConfigurationError",
    "EcnState",
    "Event",
    "EventLog",
    "PfcState",
    "ShiftRecord",
    "ack_function",
    "ecn_mark_times",
    "next_notification",
    "next_timeout",
    "packet_uniforms",
    "pfc_resume",
    "pfc_schedule",
    "shift_after_admit",
    "shift_after_timeout",
    "stitch",
]
