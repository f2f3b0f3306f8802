"""Command-line experiment runner.

    rumorwave <asymptotics|trajectory|simulate|converge|sweep|tables>
              [--config FILE] [--out DIR] [--seed-base N] [--deterministic]
              [--check-integrator] [--dist KIND] [--param NAME=VALUE ...]

Each command writes ``<command>.csv`` and ``<command>.json`` into ``--out``
(CSV goes to stdout when ``--out`` is absent).  Exit codes: 0 success,
1 bad configuration, 2 no outbreak, 3 reference mismatch.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .awareness import AwarenessDistribution, DistributionError, make_distribution
from .ddpm import LimitTrajectory, integrate_limit, sup_distance
from .limits import (
    LimitInitialCondition,
    NoOutbreakError,
    analyze,
    limit_trajectory,
    solve_zeta_infinity,
)
from .mtra import mtra_transitions, run_outbreak

SCHEMA_VERSION = "1"
COMMANDS = ("asymptotics", "trajectory", "simulate", "converge", "sweep", "tables")

EXIT_OK, EXIT_CONFIG, EXIT_NO_OUTBREAK, EXIT_MISMATCH = 0, 1, 2, 3

_number_grid = {
    "type": "object",
    "additionalProperties": False,
    "required": ["step"],
    "properties": {
        "param": {"type": "string"},
        "start": {"type": "number"},
        "stop": {"type": "number"},
        "step": {"type": "number", "exclusiveMinimum": 0},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "distribution": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["poisson", "zeta", "uniform", "dirac", "kmt", "mt", "custom"]},
                "params": {"type": "object"},
            },
        },
        "initial": {
            "oneOf": [
                {"const": "standard"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["x0"],
                    "properties": {
                        "y0": {"type": "number", "minimum": 0},
                        "x0": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    },
                },
            ]
        },
        "grid": {"oneOf": [{"type": "array", "items": {"type": "number"}}, _number_grid]},
        "populations": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "seeds": {
            "oneOf": [
                {"type": "integer", "minimum": 1},
                {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
            ]
        },
        "seed_base": {"type": "integer", "minimum": 0},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "cutoff": {"type": "integer", "minimum": 1},
        "width": {"type": "integer", "minimum": 1},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "margin": {"type": "number", "minimum": 0},
        "engine": {"enum": ["compiled", "generic"]},
        "workers": {"type": "integer", "minimum": 1},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    distribution: dict = field(default_factory=lambda: {"kind": "mt", "params": {}})
    initial: object = "standard"
    grid: object = None
    populations: list = field(default_factory=lambda: [1000, 10000, 100000])
    seeds: object = 20
    seed_base: int = 0
    tolerances: dict = field(default_factory=dict)
    cutoff: int = 3
    width: int | None = None
    horizon: float | None = None
    margin: float = 0.05
    engine: str = "compiled"
    workers: int = 1
    schema_version: str = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config: {exc.message}") from None
        return cls(**doc)

    def dist(self) -> AwarenessDistribution:
        d = self.distribution
        return make_distribution(d["kind"], **d.get("params", {}))

    def limit_initial(self) -> LimitInitialCondition:
        if self.initial == "standard":
            return LimitInitialCondition.standard()
        return LimitInitialCondition(tuple(self.initial["x0"]), self.initial.get("y0", 0.0))

    def initial_counts(self, n: int):
        if self.initial == "standard":
            return "standard"
        ic = self.limit_initial()
        counts = [round(ic.y0 * n)] + [round(v * n) for v in ic.x0]
        if counts[0] == 0:
            counts[0] = 1
        return counts

    def seed_list(self) -> list[int]:
        seeds = range(self.seeds) if isinstance(self.seeds, int) else self.seeds
        return [self.seed_base + s for s in seeds]


def load_config(path: str | None, overrides: dict | None = None, dist_kind: str | None = None,
                dist_params: dict | None = None) -> ExperimentConfig:
    """Read ``path`` (if any) and apply flag overrides.  ``dist_kind``
    replaces the distribution; ``dist_params`` are merged into its params."""
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    doc.update(overrides or {})
    if dist_kind is not None:
        doc["distribution"] = {"kind": dist_kind, "params": {}}
    if dist_params:
        dist = doc.setdefault("distribution", {"kind": "mt", "params": {}})
        if not isinstance(dist, dict):
            raise ConfigError("config: distribution must be an object")
        dist["params"] = {**dist.get("params", {}), **dist_params}
    return ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# output helpers


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.7g}"
    return str(v)


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def param_text(dist_cfg: dict) -> str:
    params = dist_cfg.get("params", {})
    return ";".join(f"{k}={_compact(v)}" for k, v in sorted(params.items()))


def _compact(v):
    if isinstance(v, list):
        return "[" + " ".join(fmt(x) for x in v) + "]"
    return fmt(v)


@dataclass
class Result:
    command: str
    header: list[str]
    rows: list[list]
    summary: dict
    status: int = EXIT_OK
    report: str = ""

    def csv(self) -> str:
        return csv_text(self.header, self.rows)


def emit(result: Result, out: str | None, deterministic: bool, stream=sys.stdout) -> None:
    summary = dict(result.summary)
    summary["command"] = result.command
    summary["schema_version"] = SCHEMA_VERSION
    if not deterministic:
        summary["created"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    if result.report:
        stream.write(result.report)
    if out is None:
        stream.write(result.csv())
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{result.command}.csv").write_text(result.csv(), encoding="utf-8")
    (d / f"{result.command}.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n",
                                              encoding="utf-8")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v))


# ---------------------------------------------------------------------------
# commands

ASYMPTOTICS_HEADER = ["dist", "params", "zeta_inf", "x1_inf", "x2_inf", "x3_inf", "y_max", "zeta_max", "wave_count"]


def cmd_asymptotics(cfg: ExperimentConfig) -> Result:
    dist = cfg.dist()
    s = analyze(dist, cfg.limit_initial(), max(3, cfg.cutoff))
    row = [cfg.distribution["kind"], param_text(cfg.distribution), s.zeta_inf,
           s.finals[1], s.finals[2], s.finals[3], s.y_max, s.zeta_max, s.wave_count]
    return Result("asymptotics", ASYMPTOTICS_HEADER, [row], s.as_dict())


def _grid(cfg: ExperimentConfig, stop: float) -> np.ndarray:
    g = cfg.grid
    if g is None:
        g = {"step": 0.01}
    if isinstance(g, list):
        return np.asarray(g, dtype=float)
    start = g.get("start", 0.0)
    stop = g.get("stop", stop)
    count = int(math.floor((stop - start) / g["step"] + 1e-9)) + 1
    pts = start + g["step"] * np.arange(max(count, 0))
    if count > 0 and pts[-1] < stop - 1e-12:
        pts = np.append(pts, stop)
    return np.round(pts, 12)


def cmd_trajectory(cfg: ExperimentConfig, check_integrator: bool = False) -> Result:
    dist = cfg.dist()
    ic = cfg.limit_initial()
    zinf = solve_zeta_infinity(dist, ic)
    stop = cfg.horizon if cfg.horizon is not None else zinf
    grid = _grid(cfg, stop)
    if np.any(grid < 0):
        raise ConfigError("trajectory grid must be nonnegative")
    width = cfg.width or (dist.support if dist.support is not None else 10)
    traj = limit_trajectory(dist, ic, grid, width)
    header = ["zeta", "y"] + [f"x{i}" for i in range(1, width + 1)]
    block = traj.states
    summary = {"zeta_inf": zinf, "points": len(grid), "width": width}
    if check_integrator:
        header += ["rk4_y"] + [f"rk4_x{i}" for i in range(1, width + 1)]
        if len(grid):
            x0 = np.concatenate([[ic.y0], ic.x0])
            rk = integrate_limit(mtra_transitions(dist), x0, max(float(grid.max()), 1e-9), step=1e-3)
            other = rk.at(grid, width + 1)
            block = np.hstack([block, other])
            summary["max_deviation"] = float(np.abs(other - traj.states).max())
        else:
            summary["max_deviation"] = 0.0
    rows = [[z, *vals] for z, vals in zip(grid, block)]
    return Result("trajectory", header, rows, summary)


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def cmd_simulate(cfg: ExperimentConfig) -> Result:
    dist = cfg.dist()
    seeds = cfg.seed_list()
    cut = cfg.cutoff
    header = ["n", "seed", "tau_n", "peak_y", "tau_max_n", "zeta_n"] + [f"x{i}" for i in range(1, cut + 1)] + ["z"]
    rows = []
    for n in cfg.populations:
        for seed in seeds:
            run = run_outbreak(dist, n, cfg.initial_counts(n), seed=seed, engine=cfg.engine)
            fin = run.final
            xs = [fin.x[i - 1] / n if i <= len(fin.x) else 0.0 for i in range(1, cut + 1)]
            rows.append([n, seed, run.tau, run.peak / n, run.peak_time, float(run.clock.zeta[-1]), *xs, fin.z / n])
    summary = {"runs": len(rows), "populations": {}}
    for n in cfg.populations:
        sub = [r for r in rows if r[0] == n]
        summary["populations"][str(n)] = {
            col: dict(zip(("mean", "se"), _mean_se([r[j] for r in sub])))
            for j, col in enumerate(header) if j >= 2
        }
    return Result("simulate", header, rows, summary)


def _distance(sample, ref: LimitTrajectory, upto: float, dist, ic) -> float:
    if isinstance(sample, LimitTrajectory):
        # deterministic samples are compared with the closed form at their own grid
        keep = sample.times <= upto
        exact = limit_trajectory(dist, ic, sample.times[keep], sample.width - 1)
        return float(np.abs(sample.states[keep] - exact.states).sum(axis=1).max(initial=0.0))
    return sup_distance(sample, ref, upto)


def _final_ignorant(sample, n) -> float:
    if isinstance(sample, LimitTrajectory):
        return float(sample.states[-1, 1])
    return float(sample.final_state(2)[1] / n)


def cmd_converge(cfg: ExperimentConfig, sampler=None) -> Result:
    """``sampler(dist, n, seed)`` returns the accelerated path to compare;
    tests swap in the exact curve to check the pipeline reports zero."""
    dist = cfg.dist()
    ic = cfg.limit_initial()
    pops = list(cfg.populations)
    if pops != sorted(pops):
        raise ConfigError("populations must be sorted")
    s = analyze(dist, ic, 1)
    upto = s.zeta_inf - cfg.margin
    ref = limit_trajectory(dist, ic, np.linspace(0.0, s.zeta_inf, int(math.ceil(s.zeta_inf / 1e-3)) + 1))
    if sampler is None:
        def sampler(dist, n, seed):
            return run_outbreak(dist, n, cfg.initial_counts(n), seed=seed, engine=cfg.engine).accelerated_path()
    rows = []
    for n in pops:
        for seed in cfg.seed_list():
            path = sampler(dist, n, seed)
            rows.append([n, seed, _distance(path, ref, upto, dist, ic), abs(_final_ignorant(path, n) - s.finals[1])])
    medians = {str(n): float(np.median([r[2] for r in rows if r[0] == n])) for n in pops}
    gaps = {str(n): float(np.median([r[3] for r in rows if r[0] == n])) for n in pops}
    med = [medians[str(n)] for n in pops]
    summary = {
        "zeta_inf": s.zeta_inf,
        "upto": upto,
        "x1_inf": s.finals[1],
        "median_sup_distance": medians,
        "median_final_gap": gaps,
        "strictly_decreasing": all(a > b for a, b in zip(med, med[1:])),
    }
    return Result("converge", ["n", "seed", "sup_distance", "final_gap"], rows, summary)


_INTEGER_PARAMS = {"uniform", "dirac", "kmt"}
_DEFAULT_PARAM = {"poisson": "lambda", "zeta": "s", "uniform": "k", "dirac": "k", "kmt": "k"}


def _sweep_point(args):
    kind, params, cutoff = args
    try:
        s = analyze(make_distribution(kind, **params), None, cutoff)
    except NoOutbreakError:
        return [float("nan"), float("nan"), float("nan"), 0]
    return [s.y_max, s.zeta_max, s.finals[1], s.wave_count]


def cmd_sweep(cfg: ExperimentConfig) -> Result:
    kind = cfg.distribution["kind"]
    if kind not in _DEFAULT_PARAM:
        raise ConfigError(f"cannot sweep over {kind!r}")
    if cfg.grid is None:
        raise ConfigError("sweep needs a grid")
    name = cfg.grid.get("param", _DEFAULT_PARAM[kind]) if isinstance(cfg.grid, dict) else _DEFAULT_PARAM[kind]
    if isinstance(cfg.grid, dict) and ("start" not in cfg.grid or "stop" not in cfg.grid):
        raise ConfigError("sweep grid needs start and stop")
    values = _grid(cfg, 0.0)
    if kind in _INTEGER_PARAMS:
        values = np.unique(np.round(values).astype(int))
    base = dict(cfg.distribution.get("params", {}))
    jobs = [(kind, {**base, name: v.item()}, 1) for v in values]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_sweep_point, jobs, chunksize=8))
    else:
        results = [_sweep_point(j) for j in jobs]
    rows = [[v, *r] for v, r in zip(values, results)]
    ymax = np.array([r[1] for r in rows], dtype=float)
    best = int(np.nanargmax(ymax)) if len(rows) and not np.all(np.isnan(ymax)) else None
    summary = {
        "family": kind,
        "param": name,
        "points": len(rows),
        "argmax": None if best is None else rows[best][0],
        "y_max_at_argmax": None if best is None else rows[best][1],
    }
    return Result("sweep", [name, "y_max", "zeta_max", "x1_inf", "wave_count"], rows, summary)


# family, parameter name, {value: (x1_inf, x2_inf, x3_inf, y_max)}
REFERENCE_ROWS = (
    ("poisson", "lambda", {2.0: (0.238539, 0.203074, 0.079212, 0.093006),
                           16.0: (0.005974, 0.030592, 0.078317, 0.000716)}),
    ("zeta", "s", {1.01: (0.169622, 0.297948, 0.2629893, 0.00379),
                   5.0: (0.2014504, 0.0114945, 0.0014158, 0.2994)}),
    ("kmt", "k", {2: (0.116586, 0.250558, 0.0, 0.174233),
                  3: (0.0680169, 0.182829, 0.245723, 0.110627)}),
    ("uniform", "k", {2: (0.3438126, 0.1223581, 0.0, 0.0848),
                      3: (0.3186747, 0.1822157, 0.0520947, 0.067350)}),
)
REFERENCE_COLUMNS = ("x1_inf", "x2_inf", "x3_inf", "y_max")


def reference_tolerance(kind: str, value, overrides: dict | None = None) -> float:
    overrides = overrides or {}
    if kind == "zeta" and value == 1.01:
        return overrides.get("zeta_heavy", 1e-3)
    return overrides.get("default", 1e-4)


def reference_cells(tolerances: dict | None = None):
    """Yield (kind, name, value, column, computed, reference, tolerance)."""
    for kind, name, rows in REFERENCE_ROWS:
        for value, ref in rows.items():
            s = analyze(make_distribution(kind, **{name: value}))
            got = (s.finals[1], s.finals[2], s.finals[3], s.y_max)
            tol = reference_tolerance(kind, value, tolerances)
            for col, g, r in zip(REFERENCE_COLUMNS, got, ref):
                yield kind, name, value, col, g, r, tol


def cmd_tables(cfg: ExperimentConfig | None = None) -> Result:
    tol_cfg = cfg.tolerances if cfg is not None else {}
    rows = []
    lines = [f"{'family':8} {'param':>12} {'column':7} {'computed':>12} {'reference':>12} {'|diff|':>10}  status"]
    failed = []
    for kind, name, value, col, got, ref, tol in reference_cells(tol_cfg):
        diff = abs(got - ref)
        ok = diff <= tol
        rows.append([kind, f"{name}={fmt(value)}", col, got, ref, diff, tol, ok])
        lines.append(f"{kind:8} {name + '=' + fmt(value):>12} {col:7} {got:12.7g} {ref:12.7g} {diff:10.2e}  "
                     f"{'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append((kind, name, value))
    failed = sorted(set(failed), key=str)
    if ("poisson", "lambda", 16.0) in failed:
        t = analyze(make_distribution("poisson", **{"lambda": 16.0}), series_cap=15)
        lines.append("note: the poisson lambda=16 reference row is reproduced by cutting the listener series "
                     f"at 15 terms: {t.finals[1]:.6f} {t.finals[2]:.6f} {t.finals[3]:.6f} {t.y_max:.6f}; "
                     "the full series converges to the computed values above")
    lines.append(f"{len(rows) - sum(1 for r in rows if not r[-1])}/{len(rows)} cells within tolerance")
    summary = {
        "cells": len(rows),
        "failed": [{"family": k, "param": n, "value": v} for k, n, v in failed],
    }
    return Result("tables", ["family", "param", "column", "computed", "reference", "abs_diff", "tolerance", "ok"],
                  rows, summary, EXIT_MISMATCH if failed else EXIT_OK, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------


def _parse_param(text: str):
    if "=" not in text:
        raise ConfigError(f"--param expects NAME=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        raise ConfigError(f"bad value in --param {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rumorwave", description="MT-RA rumor model experiments")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help="directory for CSV and JSON outputs")
    ap.add_argument("--seed-base", type=int, help="offset added to every seed")
    ap.add_argument("--deterministic", action="store_true", help="omit the timestamp from JSON output")
    ap.add_argument("--check-integrator", action="store_true", help="trajectory: add the RK4 curve")
    ap.add_argument("--dist", help="distribution kind (overrides the config)")
    ap.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                    help="distribution parameter, repeatable")
    ap.add_argument("--workers", type=int, help="parallel workers for sweep")
    return ap


def run(argv=None, stream=sys.stdout, err=sys.stderr) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        if args.seed_base is not None:
            overrides["seed_base"] = args.seed_base
        if args.workers is not None:
            overrides["workers"] = args.workers
        cfg = load_config(args.config, overrides, args.dist, dict(_parse_param(p) for p in args.param))
        if args.command == "asymptotics":
            result = cmd_asymptotics(cfg)
        elif args.command == "trajectory":
            result = cmd_trajectory(cfg, args.check_integrator)
        elif args.command == "simulate":
            result = cmd_simulate(cfg)
        elif args.command == "converge":
            result = cmd_converge(cfg)
        elif args.command == "sweep":
            result = cmd_sweep(cfg)
        else:
            result = cmd_tables(cfg)
    except NoOutbreakError as exc:
        err.write(f"rumorwave: {exc}\n")
        return EXIT_NO_OUTBREAK
    except (ConfigError, DistributionError, ValueError, TypeError) as exc:
        err.write(f"rumorwave: {exc}\n")
        return EXIT_CONFIG
    emit(result, args.out, args.deterministic, stream)
    return result.status


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
