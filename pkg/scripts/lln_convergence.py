"""Distance between scaled accelerated paths and the limit curves as n grows.

    python scripts/lln_convergence.py --dist poisson --param lambda=2 --seeds 20 --out results/lln
"""
import argparse
import json

from rumorwave import cli

ap = argparse.ArgumentParser()
ap.add_argument("--dist", default="poisson")
ap.add_argument("--param", action="append", default=[])
ap.add_argument("--populations", default="1000,10000,100000")
ap.add_argument("--seeds", type=int, default=20)
ap.add_argument("--seed-base", type=int, default=0)
ap.add_argument("--out")
args = ap.parse_args()

params = dict((k, json.loads(v)) for k, v in (p.split("=", 1) for p in args.param))
if args.dist == "poisson" and not params:
    params = {"lambda": 2.0}
cfg = cli.ExperimentConfig(distribution={"kind": args.dist, "params": params},
                           populations=[int(v) for v in args.populations.split(",")],
                           seeds=args.seeds, seed_base=args.seed_base)
res = cli.cmd_converge(cfg)
if args.out:
    cli.emit(res, args.out, deterministic=True, stream=open("/dev/null", "w"))
for n, med in res.summary["median_sup_distance"].items():
    print(f"n = {int(n):>7}: median sup distance {med:.5f}, median final gap {res.summary['median_final_gap'][n]:.5f}")
print("strictly decreasing:", res.summary["strictly_decreasing"])
