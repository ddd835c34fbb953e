"""A 31-to-1 incast burst under three loss-handling regimes.

pfc pauses the senders without marking, dcqcn adds ECN-driven rate cuts on top
of pausing, and dcqcn_nopfc lets the queue grow until marks and timeouts bring
it back.

    python3 demos/dcqcn_demo.py [--horizon 10ms] [--modes pfc dcqcn dcqcn_nopfc]
"""
import argparse

import numpy as np

from nccc.dcqcn import MB, BurstScenario, DcqcnParams, run_burst_scenario

ap = argparse.ArgumentParser()
ap.add_argument("--horizon", type=float, default=10.0, help="milliseconds")
ap.add_argument("--modes", nargs="+", default=["pfc", "dcqcn", "dcqcn_nopfc"])
args = ap.parse_args()

H = args.horizon * 1e-3
for mode in args.modes:
    r = run_burst_scenario(BurstScenario(mode=mode), DcqcnParams(), t_end=H)
    ts = np.arange(0.0, H, 1e-6)
    back = np.maximum(r.backlog(ts), 0.0) / MB
    i = int(back.argmax())
    cleared = ts[(ts > ts[i]) & (back < 0.01)]
    limits = sum(np.asarray(tr.control_at(ts[-1:]))[0] for tr in r.traces) / 1e9
    cnp = r.cnp_times(0)
    print(f"[{mode}]")
    print(f"  peak backlog {back[i]:.2f} MB at {ts[i] * 1e3:.3f} ms; "
          + (f"cleared at {cleared[0] * 1e3:.3f} ms" if cleared.size else "not cleared"))
    print(f"  pauses {len(r.run.pause_intervals)}, CNPs to sender 0 {len(cnp)}"
          + (f" (first at {cnp[0] * 1e6:.2f} us)" if cnp else ""))
    print(f"  summed rate limits at the end: {limits:.2f} Gbps")
