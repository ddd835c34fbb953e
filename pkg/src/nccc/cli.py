"""Command line front end: ``nccc run``, ``nccc convolve-debug``, ``nccc selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from .cca import FlowTrace
from .config import ScenarioConfig, from_dict, load_config
from .congestion_events import ConfigurationError
from .invariants import check_flow, check_multiflow, check_spacing
from .minplus import CumulativeFunction, convolve
from .multiflow import MultiflowResult
from .runner import build_burst, dcqcn_jobs, run_dcqcn_mode, run_single, write_svgs

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3
BUNDLED = ("vegas", "aimd_fairness", "dcqcn_burst")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("nccc") / "scenarios" / f"{name}.json"))


def resolve_config(arg: str) -> Path:
    """A config path, or the bare name of a bundled scenario."""
    p = Path(arg)
    if p.exists():
        return p
    if arg in BUNDLED:
        return bundled_path(arg)
    raise ConfigurationError(f"{arg}: no such config file or bundled scenario")


# run ----------------------------------------------------------------------------

def _job(args):
    """Run one (config, mode) pair and write its files; picklable for workers."""
    path, mode, seed, out_dir, svg, subdir = args
    cfg = load_config(path, seed=seed, mode=mode if mode and subdir == "" else None)
    t0 = time.perf_counter()
    out = run_dcqcn_mode(cfg, mode) if cfg.kind == "dcqcn_burst" else run_single(cfg)
    dest = Path(out_dir or cfg.output) / subdir
    written = out.write(dest)
    if svg:
        written += write_svgs(out, dest, f"{cfg.kind}{'/' + subdir if subdir else ''}")
    return str(path), subdir, [str(p) for p in written], out.partial, time.perf_counter() - t0


def _plan(paths, mode, seed, out_dir, svg):
    jobs = []
    for arg in paths:
        path = resolve_config(arg)
        cfg = load_config(path, seed=seed, mode=mode)
        if cfg.kind == "dcqcn_burst":
            modes = dcqcn_jobs(cfg)
            for m in modes:
                sub = "" if len(modes) == 1 else m
                jobs.append((path, m, seed, out_dir, svg, sub))
        else:
            jobs.append((path, None, seed, out_dir, svg, ""))
    return jobs


def cmd_run(ns) -> int:
    try:
        jobs = _plan(ns.config, ns.mode, ns.seed, ns.out, ns.svg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if ns.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    status = EXIT_OK
    for path, sub, written, partial, dt in results:
        tag = f"{path}{' [' + sub + ']' if sub else ''}"
        if partial:
            print(f"{tag}: event budget exceeded, partial traces written", file=sys.stderr)
            status = EXIT_GUARD
        print(f"{tag}: {len(written)} files in {dt:.1f} s")
        for w in written:
            print(f"  {w}")
    return status


# convolve-debug -----------------------------------------------------------------

def cmd_convolve_debug(ns) -> int:
    try:
        f = CumulativeFunction.from_csv(Path(ns.f).read_text(), ns.horizon)
        g = CumulativeFunction.from_csv(Path(ns.g).read_text(), ns.horizon)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    H = min(f.horizon, g.horizon)
    sys.stdout.write(convolve(f.truncate(H), g.truncate(H)).to_csv())
    return EXIT_OK


# selftest --------------------------------------------------------------------

QUICK_HORIZON = {"vegas": None, "aimd_fairness": 5e-3, "dcqcn_burst": 2e-3}


def selftest_checks(cfg: ScenarioConfig, out) -> list[tuple[str, list[str]]]:
    """Named invariant groups for one scenario run."""
    res = out.result
    checks = []
    if isinstance(res, FlowTrace):
        beta = cfg.section("cca").get("beta")
        checks.append(("D <= admitted <= A, monotone functions, exact decreases",
                       check_flow(res, float(beta) if beta is not None else None)))
        return checks
    run: MultiflowResult = res.run if hasattr(res, "run") else res
    betas = {}
    ecn_gap = None
    if cfg.kind == "dcqcn_burst":
        b = float(cfg.section("dcqcn").get("beta", 0.75))
        betas = {tr.flow_id: b for tr in run.traces}
        if res.scenario.mode != "pfc":
            ecn_gap = max(1e-12, _dcqcn_gap(cfg))
    else:
        b = float(cfg.section("cca").get("beta", 0.5))
        betas = {tr.flow_id: b for tr in run.traces}
    checks.append(("D <= admitted <= A, monotone functions, exact decreases, backlog >= 0",
                   check_multiflow(run, betas, None)))
    if ecn_gap is not None:
        v = check_spacing(run.notifications, ecn_gap, "notifications")
        for tr in run.traces:
            v += check_spacing([e.t for e in run.log.of_kind("cnp") if e.flow_id == tr.flow_id], ecn_gap,
                               f"flow {tr.flow_id} CNPs")
        checks.append((f"CNP/ECN spacing >= {ecn_gap * 1e6:g} us", v))
    if run.pause_intervals:
        bad = [f"pause {a:.9g}..{b:.9g}" for a, b in run.pause_intervals if abs((b - a) - 2e-6) > 1e-12]
        checks.append(("PFC pauses last exactly (X_off - X_on)/C", bad[:3]))
    return checks


def _dcqcn_gap(cfg) -> float:
    _, p = build_burst(cfg, "dcqcn")
    return max(p.delta_tau_ecn, p.t_gap)


def cmd_selftest(ns) -> int:
    failures = 0
    names = ns.scenario or list(BUNDLED)
    for name in names:
        path = resolve_config(name)
        raw = json.loads(path.read_text())
        if ns.quick and QUICK_HORIZON.get(raw["scenario"]):
            raw["horizon"] = QUICK_HORIZON[raw["scenario"]]
        cfg = from_dict(raw, path=path)
        runs = ([(m, run_dcqcn_mode(cfg, m)) for m in dcqcn_jobs(cfg)]
                if cfg.kind == "dcqcn_burst" else [("", run_single(cfg))])
        for sub, out in runs:
            for label, violations in selftest_checks(cfg, out):
                ok = not violations
                failures += not ok
                print(f"{'PASS' if ok else 'FAIL'} {name}{'/' + sub if sub else ''}: {label}")
                for v in violations[:5]:
                    print(f"     {v}")
    print(f"selftest: {'all checks passed' if not failures else f'{failures} check(s) failed'}")
    return EXIT_OK if not failures else EXIT_FAIL


# entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nccc", description="Network-calculus models of congestion control.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run scenario configs and write CSV (and SVG) outputs")
    r.add_argument("config", nargs="+", help="config file or bundled scenario name")
    r.add_argument("--mode", choices=["pfc", "dcqcn", "dcqcn_nopfc"], help="dcqcn_burst mode override")
    r.add_argument("--svg", action="store_true", help="also write SVG plots")
    r.add_argument("--out", help="output directory (default: the config's 'output')")
    r.add_argument("--seed", type=int, help="override the RED seed")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("convolve-debug", help="print the exact convolution of two function CSVs")
    c.add_argument("f")
    c.add_argument("g")
    c.add_argument("--horizon", type=float, help="horizon in seconds if the files carry none")
    c.set_defaults(func=cmd_convolve_debug)

    s = sub.add_parser("selftest", help="run bundled scenarios and check structural invariants")
    s.add_argument("scenario", nargs="*", help="subset of bundled scenarios or config paths")
    s.add_argument("--quick", action="store_true", help="shorter horizons")
    s.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return ns.func(ns)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
