"""Two rate-based AIMD flows sharing one bottleneck, starting from unequal rates.

The sum rate saws around capacity while the per-flow gap shrinks with every
multiplicative decrease.

    python3 demos/fairness_demo.py [--horizon 20ms] [--svg DIR]
"""
import argparse
import json

import numpy as np

from nccc.cli import bundled_path
from nccc.config import from_dict, seconds
from nccc.runner import run_single, write_svgs

ap = argparse.ArgumentParser()
ap.add_argument("--horizon", default="20ms")
ap.add_argument("--svg", metavar="DIR")
args = ap.parse_args()

raw = json.loads(bundled_path("aimd_fairness").read_text())
raw["horizon"] = args.horizon
cfg = from_dict(raw)
out = run_single(cfg)
res = out.result

H = seconds(args.horizon)
print(f"{len(res.traces)} flows over {H * 1e3:g} ms")
for t in np.linspace(0, H, 6)[:-1].tolist() + [H - cfg.resolution]:
    r = [float(tr.control_at(np.array([t]))[0]) / 1e9 for tr in res.traces]
    print(f"  t = {t * 1e3:6.2f} ms  rates " + " ".join(f"{x:7.2f}" for x in r)
          + f"  gap {abs(r[0] - r[1]):6.2f} Gbps")
for tr in res.traces:
    print(f"flow {tr.flow_id}: {len(tr.decreases)} decreases")

if args.svg:
    for p in write_svgs(out, args.svg, "aimd_fairness"):
        print("wrote", p)
