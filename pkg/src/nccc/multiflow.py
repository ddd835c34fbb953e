"""Several flows sharing one FIFO path server.

Admitted functions are summed, the aggregate is convolved with the service
curve, and the aggregate departures are split back onto the flows in FIFO
order.  The event loop in :func:`run_multiflow` drives rate-based AIMD flows
with optional timeouts, ECN/CNP feedback and PFC gating.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .cca import EventLoopError, FlowTrace, RateAimdParams
from .congestion_events import (
    ConfigurationError,
    EcnState,
    EventLog,
    PfcState,
    next_notification,
    next_timeout,
    pfc_resume,
    pfc_schedule,
)
from .minplus import (
    EPS_T,
    CumulativeFunction,
    _tol,
    add,
    add_many,
    convolve,
    lower_pseudo_inverse,
    rate_function,
    shift,
    step_function,
    stitch,
    subtract,
    upper_pseudo_inverse,
)
from .path_server import ConsistencyError, ServiceCurve, as_curve


# demultiplexing --------------------------------------------------------------

def fifo_demux(admitted_list, D_agg: CumulativeFunction, t: float, eps: float = 1e-9):
    """Per-flow ``(lower, upper)`` bounds on ``D_i(t)``:
    ``A_i(A_up(D(t)))`` and ``A_i(A_up(D(t)) + eps)`` with ``A = sum A_i``."""
    agg = add_many(admitted_list)
    y = float(D_agg(t))
    x = float(upper_pseudo_inverse(agg)(y))
    x = min(x, agg.horizon)
    lo = [float(a(x)) for a in admitted_list]
    hi = [float(a(x + eps)) for a in admitted_list]
    tol = float(_tol(y)) * len(admitted_list)
    if sum(lo) > y + tol or sum(hi) < min(y, float(agg(x + eps))) - tol:
        raise ConsistencyError(f"demux bounds {sum(lo):g}..{sum(hi):g} do not bracket D={y:g}")
    return list(zip(lo, hi))


def _split_knots(admitted_list):
    """Knots ``(Y, V)`` of the FIFO map ``y -> D_i`` for every flow.

    Traffic arriving at one instant from several flows leaves in ascending
    list order, which fixes the split inside aggregate jumps."""
    H = min(a.horizon for a in admitted_list)
    u = np.unique(np.concatenate([a.t for a in admitted_list]))
    u = u[u < H]
    u = np.append(u, H)
    left = np.array([np.atleast_1d(a(u)) for a in admitted_list])
    right = np.array([np.atleast_1d(a.right_limit(u)) for a in admitted_list])
    right[:, -1] = left[:, -1]
    J = np.maximum(right - left, 0.0)
    C = np.cumsum(J, axis=0)
    L = left.sum(axis=0)
    n, K = left.shape
    levels = np.vstack((np.zeros((1, K)), C))  # (n+1, K)
    Y = (L[None, :] + levels).T.ravel()
    prev = C - J
    V = left[:, None, :] + np.clip(levels[None, :, :] - prev[:, None, :], 0.0, J[:, None, :])
    V = V.transpose(0, 2, 1).reshape(n, -1)
    Y = np.maximum.accumulate(Y)
    keep = np.concatenate(([True], np.diff(Y) > 0))
    return Y[keep], V[:, keep]


def fifo_split(admitted_list, D: CumulativeFunction) -> list[CumulativeFunction]:
    """Exact per-flow departures ``D_i = Phi_i(D)`` with ``sum_i D_i = D``."""
    if len(admitted_list) == 1:
        return [D]
    H = D.horizon
    Y, V = _split_knots(admitted_list)
    dmax = D.final_value()
    inner = Y[(Y > 0) & (Y <= dmax)]
    tc = np.concatenate((D.t, np.atleast_1d(lower_pseudo_inverse(D)(inner))))
    tc = np.unique(tc[(tc >= 0) & (tc < H)])
    if tc.size == 0 or tc[0] != 0.0:
        tc = np.concatenate(([0.0], tc))
    d_right = np.atleast_1d(D.right_limit(tc))
    d_next = np.append(np.atleast_1d(D(tc[1:])), D(H))
    dt = np.diff(np.append(tc, H))
    out = []
    for i in range(V.shape[0]):
        yr = np.interp(d_right, Y, V[i])
        yn = np.interp(d_next, Y, V[i])
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(dt > EPS_T, (yn - yr) / dt, 0.0)
        out.append(CumulativeFunction(tc, yr, np.maximum(s, 0.0), H))
    return out


# flow set ----------------------------------------------------------------------

@dataclass
class RateFlow:
    flow_id: int
    source: CumulativeFunction
    params: RateAimdParams


@dataclass
class FlowSet:
    flows: list[RateFlow]
    service: ServiceCurve | CumulativeFunction
    delta_r: float
    ecn: EcnState | None = None
    pfc: PfcState | None = None
    timeouts: bool = True

    def __post_init__(self):
        ids = [f.flow_id for f in self.flows]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("flow ids must be unique")
        if not self.flows:
            raise ConfigurationError("empty flow set")
        for f in self.flows:
            if abs(f.params.delta_r - self.delta_r) > EPS_T:
                raise ConfigurationError("all flows share one feedback delay")
        if self.ecn is not None and self.ecn.delta_tau_ecn <= 0:
            raise ConfigurationError("the event loop needs a positive notification gap")
        self.flows = sorted(self.flows, key=lambda f: f.flow_id)


@dataclass
class MultiflowResult:
    traces: list[FlowTrace]
    admitted: CumulativeFunction
    departed: CumulativeFunction
    log: EventLog
    notifications: list[float] = field(default_factory=list)
    pause_intervals: list[tuple[float, float]] = field(default_factory=list)
    n_events: int = 0

    def backlog(self, t):
        return np.asarray(self.admitted(t)) - np.asarray(self.departed(t))

    def rates_csv(self, resolution: float = 1e-5) -> str:
        """Per-flow rate vector over time (``t,r1,r2,...`` in Gbit/s)."""
        H = self.admitted.horizon
        ts = np.arange(0.0, H + resolution / 2, resolution)
        cols = [tr.control_at(ts) / 1e9 for tr in self.traces]
        names = ",".join(f"r{k + 1}" for k in range(len(cols)))
        buf = io.StringIO()
        buf.write("# nccc-rates v1 units: t[s] r[Gbit/s]\n")
        buf.write(f"t,{names}\n")
        for row in np.column_stack([ts] + cols):
            buf.write(",".join(f"{v:.9g}" for v in row) + "\n")
        return buf.getvalue()

    def quiver_csv(self) -> str:
        """Rate-vector segments between consecutive control changes of any
        flow: ``x,y,dx,dy`` in Gbit/s (first two flows)."""
        ts = sorted({c[0] for tr in self.traces[:2] for c in tr.control})
        pts = np.array([[tr.control_at(t) / 1e9 for tr in self.traces[:2]] for t in ts])
        buf = io.StringIO()
        buf.write("# nccc-quiver v1 units: Gbit/s\n")
        buf.write("x,y,dx,dy\n")
        for a, b in zip(pts[:-1], pts[1:]):
            buf.write(f"{a[0]:.9g},{a[1]:.9g},{b[0] - a[0]:.9g},{b[1] - a[1]:.9g}\n")
        return buf.getvalue()


# event loop ----------------------------------------------------------------

class _Flow:
    def __init__(self, spec: RateFlow, horizon: float):
        self.spec = spec
        self.p = spec.params
        self.source = spec.source.truncate(horizon)
        self.src = self.source  # grows by retransmitted volumes
        self.rate = float(self.p.r_o)
        self.control = [(0.0, self.rate)]
        self.t_prev_to = -math.inf
        self.next_ai = self.p.delta_tau_ai if self.p.alpha > 0 else math.inf
        self.pending_cnp: list[float] = []
        self.decreases: list[tuple[float, str, float, float]] = []
        self.admitted = convolve(self.src, rate_function(self.rate, horizon))
        self.departed = self.admitted

    def set_rate(self, t, r):
        self.rate = r
        if self.control and abs(self.control[-1][0] - t) <= EPS_T:
            self.control[-1] = (self.control[-1][0], r)
        else:
            self.control.append((t, r))


_ORDER = {"timeout": 0, "ecn-mark": 1, "pause": 2, "resume": 2, "cnp": 3, "additive-increase": 4}


class _Engine:
    def __init__(self, fs: FlowSet, t_end: float, max_events: int | None = None):
        self.fs = fs
        self.H = float(t_end)
        self.S = fs.service
        self.rate_server = isinstance(fs.service, ServiceCurve) and fs.service.is_rate
        self.flows = [_Flow(f, self.H) for f in fs.flows]
        self.log = EventLog()
        self.paused = False
        self.t_resume = math.inf
        self.notifications: list[float] = []
        self.pauses: list[tuple[float, float]] = []
        self.max_events = max_events or min(f.p.max_events for f in self.flows)
        self._aggregate_full()

    # function maintenance ---------------------------------------------------
    def _aggregate_full(self):
        self.agg = add_many([f.admitted for f in self.flows]) if len(self.flows) > 1 else self.flows[0].admitted
        self.D = convolve(self.agg, as_curve(self.S, self.H))
        self._demux()

    def _demux(self):
        for f, d in zip(self.flows, fifo_split([f.admitted for f in self.flows], self.D)):
            f.departed = d

    def _project(self, f: _Flow, t0: float):
        y0 = float(f.admitted(t0))
        if self.paused:
            local = CumulativeFunction([0.0], [0.0], [0.0], self.H - t0)
        else:
            local = convolve(shift(f.src, t0, y0), rate_function(f.rate, self.H - t0))
        f.admitted = stitch(f.admitted, local, t0, y0)

    def _recompute(self, t0: float):
        self.agg = add_many([f.admitted for f in self.flows]) if len(self.flows) > 1 else self.flows[0].admitted
        if self.rate_server:
            y0 = float(self.D(t0))
            local = convolve(shift(self.agg, t0, y0), rate_function(self.S.rate, self.H - t0))
            self.D = stitch(self.D, local, t0, y0)
        else:
            self.D = convolve(self.agg, as_curve(self.S, self.H))
        self._demux()

    # event discovery -------------------------------------------------------
    def _candidates(self, t_cur):
        ev = []
        dr = self.fs.delta_r
        for i, f in enumerate(self.flows):
            if self.fs.timeouts and math.isfinite(f.p.tau_o):
                t_from = max(t_cur, f.t_prev_to + f.p.tau_o)
                if t_from < self.H:
                    t = next_timeout(f.admitted, f.departed, dr, f.p.tau_o, t_from, self.H)
                    if t is not None:
                        ev.append((t, "timeout", i))
            if f.next_ai < self.H:
                ev.append((f.next_ai, "additive-increase", i))
            if f.pending_cnp:
                ev.append((f.pending_cnp[0], "cnp", i))
        if self.fs.ecn is not None:
            B = subtract(self.agg, self.D)
            n = next_notification(B, self.fs.ecn, self.H, self.agg)
            if n is not None:
                ev.append((max(n, t_cur), "ecn-mark", -1))
        if self.fs.pfc is not None:
            if self.paused:
                ev.append((self.t_resume, "resume", -1))
            else:
                best = None
                for f in self.flows:
                    r = pfc_schedule(subtract(f.admitted, f.departed), self.fs.pfc, t_cur, self.H)
                    if r is not None and (best is None or r[0] < best):
                        best = r[0]
                if best is not None:
                    ev.append((max(best, t_cur), "pause", -1))
        return ev

    # event handling ----------------------------------------------------------
    def _contributing(self, t):
        out = []
        for i, f in enumerate(self.flows):
            queued = float(f.admitted(t) - f.departed(t))
            unsent = float(f.src.right_limit(t) - f.admitted.right_limit(t))
            if queued > float(_tol(queued)) or unsent > float(_tol(unsent)):
                out.append(i)
        return out

    def _handle(self, t, kind, i, dirty):
        dr = self.fs.delta_r
        if kind == "timeout":
            f = self.flows[i]
            acked = max(float(f.departed(t - dr)), float(f.admitted(f.t_prev_to)) if f.t_prev_to > -math.inf else 0.0)
            unacked = max(float(f.admitted(t)) - acked, 0.0)
            if unacked > 0:
                f.src = add(f.src, step_function(unacked, self.H, at=t))
            old = f.rate
            f.set_rate(t, max(f.p.beta * old, f.p.r_min))
            f.decreases.append((t, "timeout", old, f.rate))
            f.t_prev_to = t
            f.next_ai = t + f.p.delta_tau_ai if f.p.alpha > 0 else math.inf
            self.log.add(t, "timeout", f.spec.flow_id, f"rate {old:.6g}->{f.rate:.6g} resend {unacked:.6g}")
            dirty.add(i)
        elif kind == "additive-increase":
            f = self.flows[i]
            old = f.rate
            f.set_rate(t, min(old + f.p.alpha, f.p.r_max))
            f.next_ai = t + f.p.delta_tau_ai
            self.log.add(t, "additive-increase", f.spec.flow_id, f"rate {old:.6g}->{f.rate:.6g}")
            if f.rate != old:
                dirty.add(i)
        elif kind == "cnp":
            f = self.flows[i]
            f.pending_cnp.pop(0)
            old = f.rate
            f.set_rate(t, max(f.p.beta * old, f.p.r_min))
            f.decreases.append((t, "cnp", old, f.rate))
            f.next_ai = t + f.p.delta_tau_ai if f.p.alpha > 0 else math.inf
            self.log.add(t, "cnp", f.spec.flow_id, f"rate {old:.6g}->{f.rate:.6g}")
            dirty.add(i)
        elif kind == "ecn-mark":
            self.fs.ecn.t_underline = t
            self.notifications.append(t)
            to = self._contributing(t)
            for j in to:
                self.flows[j].pending_cnp.append(t + dr)
            self.log.add(t, "ecn-mark", -1, f"cnp to {len(to)} senders")
        elif kind == "pause":
            self.paused = True
            for j, f in enumerate(self.flows):
                self._project(f, t)
            self._recompute(t)
            Bs = [subtract(f.admitted, f.departed) for f in self.flows]
            self.t_resume, subs = pfc_resume(Bs, self.fs.pfc, t, self.H)
            for a, b in subs:
                self.pauses.append((a, b))
                self.fs.pfc.intervals.append((a, b))
                self.log.add(a, "pause", -1, f"until {b:.9g}")
        elif kind == "resume":
            self.paused = False
            self.t_resume = math.inf
            self.log.add(t, "resume", -1)
            dirty.update(range(len(self.flows)))

    def run(self) -> MultiflowResult:
        t_cur = 0.0
        n = 0
        while True:
            ev = self._candidates(t_cur)
            if not ev:
                break
            t_e = min(e[0] for e in ev)
            if t_e >= self.H:
                break
            batch = sorted((e for e in ev if e[0] <= t_e + EPS_T), key=lambda e: (_ORDER[e[1]], e[2]))
            dirty: set[int] = set()
            for _, kind, i in batch:
                self._handle(t_e, kind, i, dirty)
            n += len(batch)
            if n > self.max_events:
                raise EventLoopError(f"more than {self.max_events} events", partial=self._result(n))
            if dirty:
                for i in sorted(dirty):
                    self._project(self.flows[i], t_e)
                self._recompute(t_e)
            t_cur = t_e
        return self._result(n)

    def _result(self, n) -> MultiflowResult:
        traces = []
        for f in self.flows:
            log = EventLog()
            for e in self.log:
                if e.flow_id in (f.spec.flow_id, -1):
                    log.add(e.t, e.kind, e.flow_id, e.detail)
            traces.append(FlowTrace(
                f.spec.flow_id, f.source, f.admitted, f.departed, list(f.control), "rate", log, f.src, list(f.decreases),
            ))
        return MultiflowResult(traces, self.agg, self.D, self.log, list(self.notifications), list(self.pauses), n)


def run_multiflow(fs: FlowSet, t_end: float | None = None, max_events: int | None = None) -> MultiflowResult:
    """Global event loop over all flows of ``fs`` up to ``t_end``."""
    if t_end is None:
        t_end = min(f.params.t_end for f in fs.flows)
    return _Engine(fs, t_end, max_events).run()


__all__ = [
    "FlowSet",
    "MultiflowResult",
    "RateFlow",
    "fifo_demux",
    "fifo_split",
    "run_multiflow",
]
