import csv
import io
import json
import math

import numpy as np
import pytest

from rumorwave import cli
from rumorwave.limits import limit_trajectory


def run(argv, tmp_path=None):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(argv, stream=out, err=err)
    return code, out.getvalue(), err.getvalue()


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_asymptotics_reference_rows():
    code, out, _ = run(["asymptotics", "--dist", "poisson", "--param", "lambda=2"])
    assert code == 0
    header, row = rows(out)
    assert header == cli.ASYMPTOTICS_HEADER
    vals = dict(zip(header, row))
    assert float(vals["x1_inf"]) == pytest.approx(0.238539, abs=1e-4)
    assert float(vals["y_max"]) == pytest.approx(0.093006, abs=1e-4)
    _, out, _ = run(["asymptotics", "--dist", "kmt", "--param", "k=3"])
    got = [float(v) for v in rows(out)[1][3:7]]
    assert got == pytest.approx([0.0680169, 0.182829, 0.245723, 0.110627], abs=1e-4)
    _, out, _ = run(["asymptotics", "--dist", "zeta", "--param", "s=1.01"])
    got = [float(v) for v in rows(out)[1][3:7]]
    assert got == pytest.approx([0.169622, 0.297948, 0.2629893, 0.00379], abs=1e-3)


def test_seven_significant_digits():
    _, out, _ = run(["asymptotics", "--dist", "mt"])
    assert rows(out)[1][3] == "0.2031879"


def test_exit_codes(tmp_path):
    assert run(["asymptotics", "--config", write_config(tmp_path, {"bogus": 1})])[0] == cli.EXIT_CONFIG
    assert run(["asymptotics", "--dist", "poisson", "--param", "lambda=-1"])[0] == cli.EXIT_CONFIG
    assert run(["asymptotics", "--dist", "custom", "--param", "p=[1.0, 0.0]"])[0] == cli.EXIT_NO_OUTBREAK
    assert run(["asymptotics", "--config", str(tmp_path / "missing.json")])[0] == cli.EXIT_CONFIG
    bad = write_config(tmp_path, {"schema_version": "0"})
    assert run(["asymptotics", "--config", bad])[0] == cli.EXIT_CONFIG


def test_trajectory_points(tmp_path):
    cfg = write_config(tmp_path, {"distribution": {"kind": "mt"}, "grid": [0, math.log(2), 1.5936242600400401]})
    code, out, _ = run(["trajectory", "--config", cfg])
    assert code == 0
    r = rows(out)
    assert r[0] == ["zeta", "y", "x1"]
    assert [float(v[1]) for v in r[1:]] == pytest.approx([0, 1 - math.log(2), 0], abs=1e-7)


def test_trajectory_empty_grid(tmp_path):
    cfg = write_config(tmp_path, {"grid": []})
    code, out, _ = run(["trajectory", "--config", cfg, "--check-integrator"])
    assert code == 0
    assert out == "zeta,y,x1,rk4_y,rk4_x1\n"


def test_trajectory_two_waves_and_integrator(tmp_path):
    cfg = write_config(tmp_path, {"distribution": {"kind": "custom", "params": {"p": [0.053, 0.004, 0.023, 0.163, 0.757]}}})
    code, _, _ = run(["trajectory", "--config", cfg, "--out", str(tmp_path / "o"), "--check-integrator",
                      "--deterministic"])
    assert code == 0
    data = np.loadtxt(tmp_path / "o" / "trajectory.csv", delimiter=",", skiprows=1)
    y = data[:, 1]
    d = np.sign(np.diff(y))
    d = d[d != 0]
    assert int(np.sum(d[1:] != d[:-1])) == 3  # up, down, up, down
    assert sum(1 for a, b in zip(d, d[1:]) if a > 0 > b) == 2
    summary = json.loads((tmp_path / "o" / "trajectory.json").read_text())
    assert summary["max_deviation"] < 1e-6


def test_simulate_rows_and_determinism(tmp_path):
    cfg = write_config(tmp_path, {"distribution": {"kind": "poisson", "params": {"lambda": 2}},
                                  "populations": [2, 200], "seeds": [1, 2, 3]})
    a = run(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--deterministic"])
    b = run(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--deterministic"])
    assert a[0] == b[0] == 0
    for name in ("simulate.csv", "simulate.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    r = rows((tmp_path / "a" / "simulate.csv").read_text())
    assert r[0][:3] == ["n", "seed", "tau_n"]
    assert len(r) == 7 and all(len(x) == len(r[0]) for x in r)
    for x in r[1:]:
        if x[0] == "2":
            assert float(x[-1]) + sum(float(v) for v in x[6:-1]) == pytest.approx(1.0)
    c = run(["simulate", "--config", cfg, "--seed-base", "10", "--deterministic"])[1]
    assert rows(c)[1][1] == "11"


def test_timestamp_only_without_deterministic(tmp_path):
    run(["asymptotics", "--dist", "mt", "--out", str(tmp_path / "t")])
    assert "created" in json.loads((tmp_path / "t" / "asymptotics.json").read_text())
    run(["asymptotics", "--dist", "mt", "--out", str(tmp_path / "d"), "--deterministic"])
    assert "created" not in json.loads((tmp_path / "d" / "asymptotics.json").read_text())


def test_converge_exact_curve_gives_zero():
    cfg = cli.ExperimentConfig(distribution={"kind": "poisson", "params": {"lambda": 2.0}},
                               populations=[10, 100], seeds=2)

    def exact(dist, n, seed):
        return limit_trajectory(dist, None, np.linspace(0, 1.3, 1301))

    res = cli.cmd_converge(cfg, sampler=exact)
    assert all(r[2] < 1e-12 for r in res.rows)
    with pytest.raises(cli.ConfigError):
        cli.cmd_converge(cli.ExperimentConfig(populations=[100, 10]), sampler=exact)


def test_converge_small_run():
    cfg = cli.ExperimentConfig(distribution={"kind": "mt", "params": {}}, populations=[200, 2000], seeds=4)
    res = cli.cmd_converge(cfg)
    assert len(res.rows) == 8
    assert set(res.summary["median_sup_distance"]) == {"200", "2000"}


def test_sweep_merge_order(tmp_path):
    doc = {"distribution": {"kind": "poisson"}, "grid": {"start": 0.5, "stop": 2.5, "step": 0.25}}
    one = run(["sweep", "--config", write_config(tmp_path, doc), "--deterministic"])[1]
    doc["workers"] = 3
    many = run(["sweep", "--config", write_config(tmp_path, doc, "b.json"), "--deterministic"])[1]
    assert one == many
    assert [r[0] for r in rows(one)[1:]] == ["0.5", "0.75", "1", "1.25", "1.5", "1.75", "2", "2.25", "2.5"]


def test_sweep_integer_family(tmp_path):
    doc = {"distribution": {"kind": "uniform"}, "grid": {"start": 1, "stop": 4, "step": 1}}
    code, out, _ = run(["sweep", "--config", write_config(tmp_path, doc)])
    assert code == 0 and [r[0] for r in rows(out)[1:]] == ["1", "2", "3", "4"]
    assert run(["sweep", "--dist", "poisson"])[0] == cli.EXIT_CONFIG


def test_tables_report():
    code, out, _ = run(["tables", "--deterministic"])
    lines = out.splitlines()
    kmt2 = [l for l in lines if l.startswith("kmt") and "k=2" in l and "x2_inf" in l][0]
    assert "0.2505581" in kmt2 and kmt2.endswith("ok")
    uni3 = [l for l in lines if l.startswith("uniform") and "k=3" in l and "x3_inf" in l][0]
    assert "0.05209476" in uni3
    # exit status mirrors the cell results
    failed = [l for l in lines if l.endswith("FAIL")]
    assert code == (cli.EXIT_MISMATCH if failed else cli.EXIT_OK)


def test_converge_mt_regression_bound():
    cfg = cli.ExperimentConfig(distribution={"kind": "mt", "params": {}}, populations=[100000], seeds=20)
    res = cli.cmd_converge(cfg)
    assert sum(r[2] < 0.02 for r in res.rows) >= 18
