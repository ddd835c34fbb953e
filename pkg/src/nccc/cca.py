"""Single-flow congestion control drivers: rate-based AIMD, window-based AIMD
with slow start, and TCP Vegas."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .congestion_events import ConfigurationError, EventLog, next_timeout
from .minplus import (
    EPS_T,
    EPS_Y,
    CumulativeFunction,
    add,
    delay,
    first_at_or_above,
    min_constant,
    pointwise_max,
    pointwise_min,
    shift,
    step_function,
    stitch,
)
from .path_server import ConsistencyError, departures, departures_from, rtt


class EventLoopError(RuntimeError):
    """The event loop exceeded its iteration budget; ``partial`` holds the
    traces computed so far."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class RateAimdParams:
    alpha: float
    beta: float
    tau_o: float
    r_o: float
    delta_r: float
    delta_tau_ai: float
    t_end: float
    r_max: float = math.inf
    r_min: float = 0.0
    max_events: int = 10**6

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ConfigurationError("beta must lie in (0, 1)")
        if self.alpha < 0 or self.r_o <= 0:
            raise ConfigurationError("alpha must be non-negative and r_o positive")
        if self.tau_o <= self.delta_r:
            raise ConfigurationError("tau_o must exceed delta_r")
        if self.delta_tau_ai <= 0 or self.t_end <= 0:
            raise ConfigurationError("delta_tau_ai and t_end must be positive")


@dataclass(frozen=True)
class WindowAimdParams:
    alpha: float
    beta: float
    tau_o: float
    delta_r: float
    t_end: float
    w_o: float
    w_th_o: float
    i_max: float
    reset_to_w_o: bool = False  # literal Algorithm-2 reset instead of one packet
    max_events: int = 10**6

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ConfigurationError("beta must lie in (0, 1)")
        if not self.w_o >= self.i_max > 0:
            raise ConfigurationError("need w_o >= i_max > 0")
        if self.tau_o <= self.delta_r:
            raise ConfigurationError("tau_o must exceed delta_r")


@dataclass(frozen=True)
class VegasParams:
    delta_r: float
    t_end: float
    w_o: float
    i_max: float
    w_low: float
    w_high: float
    gamma: float
    max_events: int = 10**6

    def __post_init__(self):
        if not self.w_low < self.w_high:
            raise ConfigurationError("w_low must be below w_high")
        if not self.w_o >= self.i_max > 0:
            raise ConfigurationError("need w_o >= i_max > 0")


@dataclass
class FlowTrace:
    """Everything one flow produced: source, admitted and departure
    functions, the control variable over time and the event log."""

    flow_id: int
    source: CumulativeFunction
    admitted: CumulativeFunction
    departed: CumulativeFunction
    control: list[tuple[float, float]]
    control_kind: str  # "rate" or "window"
    log: EventLog = field(default_factory=EventLog)
    retransmitted_source: CumulativeFunction | None = None
    # exact multiplicative decreases as (t, kind, before, after)
    decreases: list[tuple[float, str, float, float]] = field(default_factory=list)

    def control_at(self, t):
        """Control value in effect on the open interval right of ``t``."""
        ts = np.array([c[0] for c in self.control])
        vs = np.array([c[1] for c in self.control])
        i = np.searchsorted(ts, np.asarray(t, dtype=float), side="right") - 1
        return vs[np.clip(i, 0, None)]

    def backlog(self, t):
        return np.asarray(self.admitted(t)) - np.asarray(self.departed(t))

    def to_csv(self, resolution: float = 1e-6, t_end: float | None = None) -> str:
        t_end = self.admitted.horizon if t_end is None else t_end
        ts = np.arange(0.0, t_end + resolution / 2, resolution)
        unit = "bit/s" if self.control_kind == "rate" else "bit"
        buf = io.StringIO()
        buf.write(f"# nccc-trace v1 flow={self.flow_id} units: t[s] rate_or_window[{unit}] backlog[bit] admitted[bit] departed[bit]\n")
        buf.write("t,rate_or_window,backlog,admitted,departed\n")
        cols = np.column_stack((ts, self.control_at(ts), self.backlog(ts), self.admitted(ts), self.departed(ts)))
        for row in cols:
            buf.write(",".join(f"{v:.9g}" for v in row) + "\n")
        return buf.getvalue()


def run_rate_aimd(A: CumulativeFunction, S, p: RateAimdParams, **engine_kw) -> FlowTrace:
    """Rate-based AIMD for one flow; this is the multi-flow engine with a
    single member, so both paths share every line of event logic."""
    from .multiflow import FlowSet, RateFlow, run_multiflow

    res = run_multiflow(FlowSet([RateFlow(0, A, p)], S, p.delta_r), p.t_end, **engine_kw)
    return res.traces[0]


def _final_trace(flow_id, source, admitted, departed, control, kind, log, src=None, decreases=()):
    return FlowTrace(flow_id, source, admitted, departed, control, kind, log, src, list(decreases))


def run_window_aimd(A: CumulativeFunction, S, p: WindowAimdParams) -> FlowTrace:
    """Window-based AIMD with slow start (Tahoe-like).

    Each flight admits at most ``W`` bits beyond its origin.  The flight ends
    once everything up to ``origin + W`` is acknowledged; the window then
    doubles below ``w_th`` and grows by ``alpha`` above it.  A timeout sets
    ``w_th = beta * W``, shrinks the window to one packet (or to ``w_o`` with
    ``reset_to_w_o``) and queues the unacknowledged volume for resending."""
    H = p.t_end
    source = A.truncate(H)
    src = source
    W, w_th = float(p.w_o), float(p.w_th_o)
    log = EventLog()
    control = [(0.0, W)]
    y_o = 0.0
    admitted = min_constant(src, W)
    departed = departures(admitted, S)
    t_prev_to = -math.inf
    t_cur = 0.0
    decreases = []
    for _ in range(p.max_events):
        ack = delay(departed, p.delta_r)
        t_w = first_at_or_above(ack, y_o + W, t_cur, H)
        t_to = next_timeout(admitted, departed, p.delta_r, p.tau_o, max(t_cur, t_prev_to + p.tau_o), H)
        cands = [t for t in (t_to, t_w) if t is not None]
        if not cands or min(cands) >= H:
            break
        t = min(cands)
        if t_to is not None and t_to <= t + EPS_T:
            acked = float(departed(t - p.delta_r))
            if t_prev_to > -math.inf:
                acked = max(acked, float(admitted(t_prev_to)))
            unacked = max(float(admitted(t)) - acked, 0.0)
            if unacked > 0:
                src = add(src, step_function(unacked, H, at=t))
            w_th = p.beta * W
            decreases.append((t, "timeout", W, w_th))
            W = float(p.w_o) if p.reset_to_w_o else float(p.i_max)
            t_prev_to = t
            log.add(t, "timeout", 0, f"w_th={w_th:.6g} W={W:.6g} resend {unacked:.6g}")
        else:
            W = 2.0 * W if W < w_th else W + p.alpha
            log.add(t, "window-update", 0, f"W={W:.6g}")
        control.append((t, W))
        y_o = float(admitted(t))
        local = min_constant(shift(src, t, y_o), W)
        admitted = stitch(admitted, local, t, y_o)
        departed = departures_from(admitted, departed, t, S)
        t_cur = t
    else:
        raise EventLoopError("window AIMD exceeded its event budget",
                             partial=_final_trace(0, source, admitted, departed, control, "window", log, src, decreases))
    return _final_trace(0, source, admitted, departed, control, "window", log, src, decreases)


def _window_admit(src, admitted, departed, W, t0, t1, S, delta_r):
    """Sliding-window admission ``max(admitted(t0), min(src, W + D(t - delta_r)))``
    on ``(t0, t1]``.  Processed in chunks of ``delta_r`` so the acknowledgment
    term only ever looks at departures that are already final."""
    H = src.horizon
    a = t0
    while a < t1 - EPS_T:
        b = min(a + delta_r, t1)
        y0 = float(admitted(a))
        allowed = add(delay(departed, delta_r), step_function(W, H))
        cand = pointwise_max(pointwise_min(src, allowed), step_function(y0, H))
        admitted = stitch(admitted, shift(cand, a, y0), a, y0)
        departed = departures_from(admitted, departed, a, S)
        a = b
    return admitted, departed


def run_vegas(A: CumulativeFunction, S, p: VegasParams) -> FlowTrace:
    """TCP Vegas without timeouts.

    The window is revisited every ``minRTT``; ``baseRTT`` is the feedback
    delay.  In slow start the window doubles on every other update until
    ``diff`` exceeds ``gamma``; afterwards it moves by one packet whenever
    ``diff`` leaves ``[w_low, w_high]``."""
    H = p.t_end
    source = A.truncate(H)
    W = float(p.w_o)
    slow_start, skip = True, 0
    base = min_rtt = float(p.delta_r)
    log = EventLog()
    control = [(0.0, W)]
    admitted = min_constant(source, W)
    departed = departures(admitted, S)
    t_e = 0.0
    for _ in range(p.max_events):
        t_next = t_e + min_rtt
        admitted, departed = _window_admit(source, admitted, departed, W, t_e, min(t_next, H), S, p.delta_r)
        t_e = t_next
        if t_e >= H:
            break
        # with nothing outstanding no acknowledgment arrives, so there is no sample
        in_flight = float(admitted.right_limit(t_e)) - float(departed(t_e - p.delta_r))
        if in_flight > EPS_Y:
            min_rtt = rtt(admitted, departed, p.delta_r, t_e, side="right")
        if min_rtt < p.delta_r - 1e-12:
            raise ConsistencyError(f"RTT {min_rtt:g} below the feedback delay")
        diff = base * (W / base - W / min_rtt)
        log.add(t_e, "rtt-update", 0, f"minRTT={min_rtt:.9g} diff={diff:.6g}")
        old = W
        if slow_start:
            if diff > p.gamma:
                W = W * base / min_rtt
                slow_start = False
            else:
                if skip == 0:
                    W = 2.0 * W
                skip = (skip + 1) % 2
        elif diff < p.w_low:
            W = W + p.i_max
        elif diff > p.w_high:
            W = max(W - p.i_max, p.i_max)
        if W != old:
            control.append((t_e, W))
            log.add(t_e, "window-update", 0, f"W={W:.6g}")
    else:
        raise EventLoopError("Vegas exceeded its event budget",
                             partial=_final_trace(0, source, admitted, departed, control, "window", log))
    return _final_trace(0, source, admitted, departed, control, "window", log)
