"""Turn a :class:`ScenarioConfig` into driver calls and output files."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cca import (
    EventLoopError,
    FlowTrace,
    RateAimdParams,
    VegasParams,
    WindowAimdParams,
    run_vegas,
    run_window_aimd,
)
from .config import ScenarioConfig, bits, bps, seconds
from .congestion_events import ConfigurationError
from .dcqcn import MODES, BurstResult, BurstScenario, DcqcnParams, run_burst_scenario
from .minplus import CumulativeFunction, bursty_source
from .multiflow import FlowSet, MultiflowResult, RateFlow, run_multiflow
from .path_server import ServiceCurve


@dataclass
class RunOutput:
    """Files produced by one scenario, keyed by relative path."""

    files: dict[str, str] = field(default_factory=dict)
    result: object = None
    series: dict[str, tuple[np.ndarray, dict[str, np.ndarray]]] = field(default_factory=dict)
    partial: bool = False

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        written = []
        for name, text in sorted(self.files.items()):
            p = out_dir / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text)
            written.append(p)
        return written


def _csv(comment: str, names: list[str], ts, cols) -> str:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    buf.write(",".join(["t"] + names) + "\n")
    for row in np.column_stack([ts] + list(cols)):
        buf.write(",".join(f"{v:.9g}" for v in row) + "\n")
    return buf.getvalue()


# builders -----------------------------------------------------------------

def build_service(cfg: ScenarioConfig):
    ps = cfg.section("path_server")
    kind = ps["kind"]
    if kind == "rate":
        return ServiceCurve.rate_server(bps(ps["rate"], "path_server.rate"))
    if kind == "token_bucket":
        return ServiceCurve.token_bucket(bits(ps["burst"], "path_server.burst"), bps(ps["rate"], "path_server.rate"))
    return ServiceCurve.window(bits(ps["window"], "path_server.window"))


def build_source(spec: dict, horizon: float, where: str) -> CumulativeFunction:
    bursts = []
    if "initial_burst" in spec:
        bursts.append((0.0, bits(spec["initial_burst"], f"{where}.initial_burst")))
    for k, b in enumerate(spec.get("bursts", [])):
        bursts.append((seconds(b["at"], f"{where}.bursts[{k}].at"), bits(b["size"], f"{where}.bursts[{k}].size")))
    pb = spec.get("periodic_bursts")
    if pb:
        t0 = seconds(pb["start"], f"{where}.periodic_bursts.start")
        dt = seconds(pb["period"], f"{where}.periodic_bursts.period")
        size = bits(pb["size"], f"{where}.periodic_bursts.size")
        bursts += [(t0 + k * dt, size) for k in range(pb["count"])]
    rate = bps(spec.get("rate", 0), f"{where}.rate")
    return bursty_source(horizon, rate, bursts)


def _cca_params(cfg: ScenarioConfig, source_spec: dict | None = None):
    c = dict(cfg.section("cca"))
    kind = c.pop("kind")
    dr = seconds(cfg.raw["delta_r"], "delta_r")
    H = cfg.horizon
    known = {
        "rate_aimd": {"alpha": bps, "beta": float, "tau_o": seconds, "r_o": bps, "delta_tau_ai": seconds,
                      "r_max": bps, "r_min": bps, "max_events": int},
        "window_aimd": {"alpha": bits, "beta": float, "tau_o": seconds, "w_o": bits, "w_th_o": bits,
                        "i_max": bits, "reset_to_w_o": bool, "max_events": int},
        "vegas": {"w_o": bits, "i_max": bits, "w_low": bits, "w_high": bits, "gamma": bits, "max_events": int},
    }[kind]
    if source_spec and "r_o" in source_spec:
        c["r_o"] = source_spec["r_o"]
    unknown = set(c) - set(known)
    if unknown:
        raise ConfigurationError(f"cca: unknown field(s) {', '.join(sorted(unknown))} for kind {kind}")
    kw = {}
    for k, v in c.items():
        conv = known[k]
        kw[k] = conv(v, f"cca.{k}") if conv in (bps, bits, seconds) else conv(v)
    cls = {"rate_aimd": RateAimdParams, "window_aimd": WindowAimdParams, "vegas": VegasParams}[kind]
    try:
        return kind, cls(delta_r=dr, t_end=H, **kw)
    except TypeError as exc:
        raise ConfigurationError(f"cca: {exc}") from exc


# scenario runners ---------------------------------------------------------------

def _trace_series(tr: FlowTrace, ts):
    return {
        "control": tr.control_at(ts),
        "backlog": tr.backlog(ts),
        "total_backlog": np.asarray(tr.source(ts)) - np.asarray(tr.departed(ts)),
    }


def run_single(cfg: ScenarioConfig) -> RunOutput:
    H, res = cfg.horizon, cfg.resolution
    S = build_service(cfg)
    srcs = cfg.section("sources")
    kind = cfg.section("cca")["kind"]
    out = RunOutput()
    ts = np.arange(0.0, H, res)
    if kind == "rate_aimd":
        flows = []
        for k, sp in enumerate(srcs):
            _, p = _cca_params(cfg, sp)
            flows.append(RateFlow(int(sp.get("id", k)), build_source(sp, H, f"sources[{k}]"), p))
        fs = FlowSet(flows, S, seconds(cfg.raw["delta_r"], "delta_r"))
        try:
            res_ = run_multiflow(fs, H)
        except EventLoopError as exc:
            out.partial = True
            res_ = exc.partial
        out.result = res_
        _multiflow_files(cfg, res_, out, ts)
        return out
    if len(srcs) != 1:
        raise ConfigurationError(f"sources: a {kind} scenario takes exactly one source")
    A = build_source(srcs[0], H, "sources[0]")
    _, p = _cca_params(cfg)
    try:
        tr = run_vegas(A, S, p) if kind == "vegas" else run_window_aimd(A, S, p)
    except EventLoopError as exc:
        out.partial = True
        tr = exc.partial
    out.result = tr
    ser = _trace_series(tr, ts)
    out.series["window"] = (ts, {"window [kB]": ser["control"] / 8e3})
    out.series["backlog"] = (ts, {"total [MB]": ser["total_backlog"] / 8e6, "network [MB]": ser["backlog"] / 8e6})
    prefix = "vegas_" if cfg.kind == "vegas" else ""
    out.files[f"{prefix}cwnd.csv"] = _csv("nccc-cwnd v1 units: t[s] window[bit]", ["window"], ts, [ser["control"]])
    out.files[f"{prefix}backlog.csv"] = _csv(
        "nccc-backlog v1 units: t[s] total[bit] network[bit]; total = source minus departures",
        ["total", "network"], ts, [ser["total_backlog"], ser["backlog"]])
    out.files["trace.csv"] = tr.to_csv(res, H - res / 2)
    out.files["events.csv"] = tr.log.to_csv()
    return out


def _multiflow_files(cfg, res_: MultiflowResult, out: RunOutput, ts):
    out.files["rates.csv"] = res_.rates_csv(max(cfg.resolution, 1e-6))
    out.files["quiver.csv"] = res_.quiver_csv()
    b = res_.backlog(ts)
    out.files["backlog.csv"] = _csv("nccc-backlog v1 units: t[s] backlog[bit]", ["backlog"], ts, [b])
    out.files["events.csv"] = res_.log.to_csv()
    out.series["rates"] = (ts, {f"flow {tr.flow_id} [Gbps]": tr.control_at(ts) / 1e9 for tr in res_.traces})
    out.series["backlog"] = (ts, {"backlog [MB]": b / 8e6})
    if len(res_.traces) >= 2:
        out.series["quiver"] = (None, {"quiver": np.array([[tr.control_at(t) / 1e9 for tr in res_.traces[:2]]
                                                          for t in sorted({c[0] for tr in res_.traces[:2] for c in tr.control})])})


def dcqcn_jobs(cfg: ScenarioConfig) -> list[str]:
    d = cfg.section("dcqcn")
    if "mode" in d:
        return [d["mode"]]
    return list(d.get("modes", MODES))


def build_burst(cfg: ScenarioConfig, mode: str) -> tuple[BurstScenario, DcqcnParams]:
    d = cfg.section("dcqcn")
    skw, pkw = {"mode": mode}, {"seed": cfg.seed}
    if "n_senders" in d:
        skw["n_senders"] = int(d["n_senders"])
    if "burst_size" in d:
        skw["burst_size"] = bits(d["burst_size"], "dcqcn.burst_size")
    if "line_rate" in d:
        skw["line_rate"] = bps(d["line_rate"], "dcqcn.line_rate")
    if "delta_r" in cfg.raw:
        skw["delta_r"] = seconds(cfg.raw["delta_r"], "delta_r")
    for k, conv in (("k_min", bits), ("k_max", bits), ("red_unit", bits), ("r_ai", bps),
                    ("delta_tau_inc", seconds), ("delta_tau_ecn", seconds), ("tau_o", seconds)):
        if k in d:
            pkw[k] = conv(d[k], f"dcqcn.{k}")
    if "p_max" in d:
        pkw["p_max"] = float(d["p_max"])
    if "beta" in d:
        pkw["beta_const"] = float(d["beta"])
    return BurstScenario(**skw), DcqcnParams(**pkw)


def run_dcqcn_mode(cfg: ScenarioConfig, mode: str) -> RunOutput:
    s, p = build_burst(cfg, mode)
    out = RunOutput()
    try:
        r = run_burst_scenario(s, p, cfg.horizon)
    except EventLoopError as exc:
        out.partial = True
        r = BurstResult(s, exc.partial, cfg.horizon)
    out.result = r
    out.files["rate.csv"] = r.rate_csv(cfg.resolution)
    out.files["backlog.csv"] = r.backlog_csv(cfg.resolution)
    out.files["events.csv"] = r.run.log.to_csv()
    ts = np.arange(0.0, cfg.horizon, cfg.resolution)
    out.series["rate"] = (ts, {"aggregate [Gbps]": r.aggregate_rate(ts, cfg.resolution) / 1e9})
    out.series["backlog"] = (ts, {"backlog [MB]": np.maximum(r.backlog(ts), 0) / 8e6})
    return out


def run_config(cfg: ScenarioConfig) -> dict[str, RunOutput]:
    """All outputs of ``cfg``, keyed by sub-directory ("" for a single job)."""
    if cfg.kind == "dcqcn_burst":
        modes = dcqcn_jobs(cfg)
        if len(modes) == 1:
            return {"": run_dcqcn_mode(cfg, modes[0])}
        return {m: run_dcqcn_mode(cfg, m) for m in modes}
    return {"": run_single(cfg)}


# plotting ------------------------------------------------------------------------

def write_svgs(out: RunOutput, out_dir, title: str) -> list[Path]:
    """Line plots of every recorded series plus the rate quiver, if any."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "nccc"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (ts, cols) in sorted(out.series.items()):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        if name == "quiver":
            pts = cols["quiver"]
            if len(pts) > 1:
                d = np.diff(pts, axis=0)
                ax.quiver(pts[:-1, 0], pts[:-1, 1], d[:, 0], d[:, 1], angles="xy", scale_units="xy", scale=1, width=0.003)
            ax.plot([0, 100], [100, 0], "k--", lw=0.8)
            ax.plot([0, 100], [0, 100], "k:", lw=0.8)
            ax.set_xlabel("flow 1 rate [Gbps]")
            ax.set_ylabel("flow 2 rate [Gbps]")
        else:
            for label, v in cols.items():
                ax.plot(ts * 1e3, v, lw=0.9, label=label)
            ax.set_xlabel("t [ms]")
            ax.legend(loc="best", fontsize=8)
        ax.set_title(f"{title}: {name}")
        fig.tight_layout()
        p = out_dir / f"{name}.svg"
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(p)
    return paths


__all__ = ["RunOutput", "build_burst", "build_service", "build_source", "dcqcn_jobs",
           "run_config", "run_dcqcn_mode", "run_single", "write_svgs"]
