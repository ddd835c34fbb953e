"""Structural checks that every run must satisfy.

Each ``check_*`` function returns a list of human-readable violations; an
empty list means the run is consistent.
"""

from __future__ import annotations

import numpy as np

from .cca import FlowTrace
from .minplus import EPS_T, PiecewiseLinear, _tol, is_valid_cumulative


def _probe_times(*fs: PiecewiseLinear) -> np.ndarray:
    """Breakpoints of every function plus the midpoints between them."""
    H = min(f.horizon for f in fs)
    t = np.unique(np.concatenate([f.t for f in fs] + [[H]]))
    t = t[t <= H]
    mids = (t[:-1] + t[1:]) / 2
    return np.unique(np.concatenate((t, mids)))


def _le(f, g, what: str) -> list[str]:
    """``f <= g`` at every probe time, for values and right limits."""
    ts = _probe_times(f, g)
    out = []
    for name, a, b in (("value", f(ts), g(ts)), ("right limit", f.right_limit(ts), g.right_limit(ts))):
        a, b = np.asarray(a), np.asarray(b)
        bad = a - b > _tol(b)
        if bad.any():
            k = int(np.argmax(bad))
            out.append(f"{what}: {name} violated at t={ts[k]:.9g} ({a[k]:.9g} > {b[k]:.9g})")
    return out


def check_flow(tr: FlowTrace, beta: float | None = None, r_min: float = 0.0) -> list[str]:
    """Ordering ``D <= admitted <= A``, monotone stitched functions and exact
    multiplicative decreases for one flow."""
    out = []
    src = tr.retransmitted_source if tr.retransmitted_source is not None else tr.source
    for name, f in (("source", src), ("admitted", tr.admitted), ("departed", tr.departed)):
        if not is_valid_cumulative(f):
            out.append(f"flow {tr.flow_id}: {name} is not a valid cumulative function")
    out += _le(tr.departed, tr.admitted, f"flow {tr.flow_id}: D <= admitted")
    out += _le(tr.admitted, src, f"flow {tr.flow_id}: admitted <= A")
    if beta is not None:
        for t, kind, before, after in tr.decreases:
            want = max(beta * before, r_min) if tr.control_kind == "rate" else beta * before
            if after != want:
                out.append(f"flow {tr.flow_id}: {kind} at t={t:.9g} gave {after!r}, expected {want!r}")
    return out


def check_backlog(admitted: PiecewiseLinear, departed: PiecewiseLinear, what: str = "aggregate") -> list[str]:
    ts = _probe_times(admitted, departed)
    b = np.asarray(admitted(ts)) - np.asarray(departed(ts))
    bad = b < -_tol(np.asarray(admitted(ts)))
    if bad.any():
        k = int(np.argmax(bad))
        return [f"{what}: negative backlog {b[k]:.6g} at t={ts[k]:.9g}"]
    return []


def check_spacing(times, gap: float, what: str) -> list[str]:
    times = np.sort(np.asarray(times, dtype=float))
    if times.size < 2:
        return []
    d = np.diff(times)
    bad = d < gap - EPS_T
    if bad.any():
        k = int(np.argmax(bad))
        return [f"{what}: spacing {d[k]:.9g} s below {gap:.9g} s at t={times[k + 1]:.9g}"]
    return []


def check_multiflow(res, beta_by_flow: dict[int, float] | None = None, gap: float | None = None,
                    r_min: float = 0.0) -> list[str]:
    """Every per-flow check, aggregate backlog, and notification spacing."""
    out = []
    for tr in res.traces:
        beta = beta_by_flow.get(tr.flow_id) if beta_by_flow else None
        out += check_flow(tr, beta, r_min)
    out += check_backlog(res.admitted, res.departed)
    if gap is not None:
        out += check_spacing(res.notifications, gap, "congestion notifications")
        for tr in res.traces:
            cnps = [e.t for e in res.log.of_kind("cnp") if e.flow_id == tr.flow_id]
            out += check_spacing(cnps, gap, f"flow {tr.flow_id} CNPs")
    return out


__all__ = ["check_backlog", "check_flow", "check_multiflow", "check_spacing"]
