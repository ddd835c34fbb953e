"""Walk through the bundled Vegas scenario and print what the window does.

    python3 demos/vegas_demo.py [--svg DIR]
"""
import argparse

import numpy as np

from nccc.cli import bundled_path
from nccc.config import load_config
from nccc.runner import run_single, write_svgs

ap = argparse.ArgumentParser()
ap.add_argument("--svg", metavar="DIR")
args = ap.parse_args()

cfg = load_config(bundled_path("vegas"))
out = run_single(cfg)
tr = out.result
ts = np.arange(0.0, cfg.horizon, cfg.resolution)
W = np.asarray(tr.control_at(ts))
total = np.asarray(tr.source(ts)) - np.asarray(tr.departed(ts))

print(cfg.raw["description"])
print(f"window starts at {W[0] / 8e3:.1f} kB and peaks at {W.max() / 8e3:.1f} kB "
      f"({ts[W.argmax()] * 1e3:.3f} ms)")
drained = ts[(ts > 0) & (total <= 8e4)]
print(f"initial burst fully drained by {drained[0] * 1e3:.3f} ms" if drained.size else "initial burst never drains")
for k in range(4):
    t0 = 1e-3 + 0.5e-3 * k
    m = (ts >= t0) & (ts < t0 + 0.5e-3)
    back = total[m] / 8e6
    print(f"burst at {t0 * 1e3:.1f} ms: backlog spikes to {back.max():.3f} MB, "
          f"{max(back[-1], 0.0):.3f} MB left 0.5 ms later")
print(f"{len(tr.log)} congestion events logged")

if args.svg:
    for p in write_svgs(out, args.svg, "vegas"):
        print("wrote", p)
