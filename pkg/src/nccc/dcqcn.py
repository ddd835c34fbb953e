"""Synchronized burst transmission under DCQCN-style rate control.

``n_senders`` sources each hold a burst at ``t = 0`` and start at line rate.
The bottleneck marks with RED, every notification cuts the rate of each
contributing sender by a constant factor, and rates climb back by a fixed
step after every quiet ``delta_tau_inc``.  PFC can gate all senders.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cca import RateAimdParams
from .congestion_events import ConfigurationError, EcnState, PfcState
from .minplus import step_function
from .multiflow import FlowSet, MultiflowResult, RateFlow, run_multiflow
from .path_server import ServiceCurve

KB = 8e3  # bits
MB = 8e6
MODES = ("pfc", "dcqcn", "dcqcn_nopfc")


@dataclass(frozen=True)
class DcqcnParams:
    """Switch and sender parameters.  The first block holds the standard
    DCQCN settings, the second the constants of the simplified model."""

    k_min: float = 5 * KB
    k_max: float = 200 * KB
    p_max: float = 0.01
    g: float = 1 / 256
    t_gap: float = 50e-6
    k_timer: float = 55e-6
    t_timer: float = 55e-6
    byte_counter: float = 10 * MB
    r_ai: float = 5e6
    r_hi: float = 50e6
    fast_recovery_steps: int = 5

    beta_const: float = 0.75
    delta_tau_inc: float = 55e-6
    tau_o: float = 3e-3
    delta_tau_ecn: float = 50e-6
    red_unit: float = 1 * KB
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.beta_const < 1:
            raise ConfigurationError("beta_const must lie in (0, 1)")
        if self.t_gap <= 0 or self.delta_tau_ecn <= 0:
            raise ConfigurationError("notification gaps must be positive")
        if not 0 <= self.k_min < self.k_max:
            raise ConfigurationError("need 0 <= k_min < k_max")


@dataclass(frozen=True)
class BurstScenario:
    n_senders: int = 31
    burst_size: float = 10 * MB
    line_rate: float = 100e9
    delta_r: float = 4e-6
    mode: str = "dcqcn"
    # per port and per Gbit/s of port speed
    x_off_per_gbps: float = 9.5 * KB
    x_on_per_gbps: float = 9.25 * KB

    def __post_init__(self):
        if self.n_senders < 1 or self.burst_size <= 0:
            raise ConfigurationError("need at least one sender and a positive burst")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")

    @property
    def x_off(self) -> float:
        return self.x_off_per_gbps * self.line_rate / 1e9

    @property
    def x_on(self) -> float:
        return self.x_on_per_gbps * self.line_rate / 1e9


@dataclass
class BurstResult:
    scenario: BurstScenario
    run: MultiflowResult
    t_end: float

    @property
    def traces(self):
        return self.run.traces

    def cnp_times(self, flow: int = 0) -> list[float]:
        fid = self.run.traces[flow].flow_id
        return [e.t for e in self.run.log.of_kind("cnp") if e.flow_id == fid]

    def aggregate_rate(self, ts, window: float = 1e-6) -> np.ndarray:
        """Admitted aggregate rate averaged over ``[t, t + window)``."""
        ts = np.asarray(ts, dtype=float)
        hi = np.minimum(ts + window, self.t_end)
        A = self.run.admitted
        with np.errstate(invalid="ignore", divide="ignore"):
            r = (A(hi) - A(ts)) / (hi - ts)
        return np.where(hi > ts, r, 0.0)

    def backlog(self, ts) -> np.ndarray:
        return self.run.backlog(np.asarray(ts, dtype=float))

    def rate_csv(self, resolution: float = 1e-6) -> str:
        ts = np.arange(0.0, self.t_end, resolution)
        r = self.aggregate_rate(ts, resolution) / 1e9
        return _csv("nccc-rate v1 units: t[s] rate[Gbit/s]", "t,rate_gbps", ts, r)

    def backlog_csv(self, resolution: float = 1e-6) -> str:
        ts = np.arange(0.0, self.t_end + resolution / 2, resolution)
        b = np.maximum(self.backlog(ts), 0.0) / MB
        return _csv("nccc-backlog v1 units: t[s] backlog[MB]", "t,backlog_mb", ts, b)


def _csv(comment, header, ts, vs) -> str:
    buf = io.StringIO()
    buf.write(f"# {comment}\n{header}\n")
    for t, v in zip(ts, vs):
        buf.write(f"{t:.9g},{v:.9g}\n")
    return buf.getvalue()


def build_flowset(s: BurstScenario, p: DcqcnParams, t_end: float) -> FlowSet:
    dcqcn = s.mode != "pfc"
    rp = RateAimdParams(
        alpha=p.r_ai if dcqcn else 0.0,
        beta=p.beta_const,
        tau_o=p.tau_o,
        r_o=s.line_rate,
        delta_r=s.delta_r,
        delta_tau_ai=p.delta_tau_inc,
        t_end=t_end,
        r_max=s.line_rate,
    )
    flows = [RateFlow(i, step_function(s.burst_size, t_end), rp) for i in range(s.n_senders)]
    ecn = None
    if dcqcn:
        ecn = EcnState(p.k_min, p.k_max, p.p_max, max(p.delta_tau_ecn, p.t_gap),
                       rng_seed=p.seed, i_max=p.red_unit)
    pfc = None if s.mode == "dcqcn_nopfc" else PfcState(s.x_off, s.x_on, s.line_rate, s.delta_r)
    return FlowSet(flows, ServiceCurve.rate_server(s.line_rate), s.delta_r,
                   ecn=ecn, pfc=pfc, timeouts=s.mode == "dcqcn_nopfc")


def run_burst_scenario(s: BurstScenario, p: DcqcnParams | None = None, t_end: float = 10e-3,
                       max_events: int | None = None) -> BurstResult:
    p = p or DcqcnParams()
    fs = build_flowset(s, p, t_end)
    return BurstResult(s, run_multiflow(fs, t_end, max_events=max_events), t_end)


# full DCQCN sender state machine -----------------------------------------------

@dataclass
class DcqcnState:
    """Sender state of the unsimplified algorithm: current and target rate,
    reduction factor and the two increase counters."""

    rc: float
    rt: float
    alpha: float = 1.0
    i_t: int = 0
    i_b: int = 0
    line_rate: float = math.inf
    params: DcqcnParams = field(default_factory=DcqcnParams)


def dcqcn_full_rate_update(state: DcqcnState, event: str) -> DcqcnState:
    """Apply one event to ``state`` and return the new state.

    ``event`` is ``"cnp"``, ``"alpha_timer"`` (``K`` elapsed without a CNP),
    ``"rate_timer"`` (``T`` elapsed) or ``"byte_counter"`` (``B`` bytes sent).
    With the initial ``alpha = 1`` the first CNP sets the rate to zero; that
    is the literal rule and is left as is.
    """
    p = state.params
    if event == "cnp":
        return replace(state, rt=state.rc, rc=(1 - state.alpha) * state.rc,
                       alpha=state.alpha + p.g * (1 - state.alpha), i_t=0, i_b=0)
    if event == "alpha_timer":
        return replace(state, alpha=(1 - p.g) * state.alpha)
    if event == "rate_timer":
        st = replace(state, i_t=state.i_t + 1)
    elif event == "byte_counter":
        st = replace(state, i_b=state.i_b + 1)
    else:
        raise ValueError(f"unknown DCQCN event {event!r}")
    F = p.fast_recovery_steps
    rt = st.rt
    if min(st.i_t, st.i_b) >= F:
        rt = rt + (min(st.i_t, st.i_b) - F) * p.r_hi
    elif max(st.i_t, st.i_b) >= F:
        rt = rt + p.r_ai
    rt = min(rt, st.line_rate)
    return replace(st, rt=rt, rc=min((st.rc + rt) / 2, st.line_rate))


__all__ = [
    "BurstResult",
    "BurstScenario",
    "DcqcnParams",
    "DcqcnState",
    "MODES",
    "build_flowset",
    "dcqcn_full_rate_update",
    "run_burst_scenario",
]
