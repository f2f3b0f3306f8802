"""Spreader curves for the two multi-wave awareness laws, with RK4 check.

    python scripts/wave_examples.py --out results/waves
"""
import argparse
from pathlib import Path

from rumorwave import cli
from rumorwave.awareness import custom
from rumorwave.limits import analyze

LAWS = {
    "late_peak": [0.053, 0.004, 0.023, 0.163, 0.757],
    "early_peak": [0.009, 0.014, 0.002, 0.038, 0.004, 0.167, 0.766],
}

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="results/waves")
args = ap.parse_args()

for label, p in LAWS.items():
    s = analyze(custom(p))
    print(f"{label}: zeta_inf {s.zeta_inf:.6f}, waves " +
          ", ".join(f"({z:.4f}, {y:.6f})" for z, y in s.waves))
    cfg = cli.ExperimentConfig(distribution={"kind": "custom", "params": {"p": p}}, grid={"step": 0.005})
    cli.emit(cli.cmd_trajectory(cfg, check_integrator=True), str(Path(args.out) / label), deterministic=True,
             stream=open("/dev/null", "w"))
