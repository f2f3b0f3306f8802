"""Parameter sweeps behind the y_max and x1_inf curves.

    python scripts/sweep.py --out results/sweeps [--workers 4]

Writes one CSV per family: poisson lambda in 0.1..5 (step 0.01), zeta s in
1.05..30, uniform k in 1..60.
"""
import argparse
from pathlib import Path

from rumorwave import cli

GRIDS = {
    "poisson": {"start": 0.1, "stop": 5.0, "step": 0.01},
    "zeta": {"start": 1.05, "stop": 30.0, "step": 0.05},
    "uniform": {"start": 1, "stop": 60, "step": 1},
}

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="results/sweeps")
ap.add_argument("--workers", type=int, default=1)
args = ap.parse_args()

for family, grid in GRIDS.items():
    cfg = cli.ExperimentConfig(distribution={"kind": family, "params": {}}, grid=grid, workers=args.workers)
    res = cli.cmd_sweep(cfg)
    out = Path(args.out) / family
    cli.emit(res, str(out), deterministic=True)
    last = res.rows[-1]
    print(f"{family:8} argmax {res.summary['param']} = {res.summary['argmax']:g}  "
          f"(y_max {res.summary['y_max_at_argmax']:.6f}); at {last[0]:g}: y_max {last[1]:.6f}, x1_inf {last[3]:.6f}")
