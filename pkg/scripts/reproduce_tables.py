"""Recompute every reference cell and print computed / reference / |diff|.

    python scripts/reproduce_tables.py [--out DIR]
"""
import argparse
import sys

from rumorwave import cli

ap = argparse.ArgumentParser()
ap.add_argument("--out")
args = ap.parse_args()
res = cli.cmd_tables()
sys.stdout.write(res.report)
if args.out:
    cli.emit(res, args.out, deterministic=True, stream=open("/dev/null", "w"))
sys.exit(res.status)
