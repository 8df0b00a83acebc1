import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from maxsmooth.cli import (EXIT_CERT, EXIT_CONFIG, EXIT_OK, SWEEP_FIELDS, load_config,
                           loglog_slope, run_cli, validate)
from maxsmooth.smoothing import CSV_FIELDS

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def _rows(path):
    return list(csv.reader(open(path)))


def test_solve_example2(tmp_path, capsys):
    out = tmp_path / "run"
    status = run_cli(["solve", "--config", str(CONFIGS / "example2.json"), "--out", str(out)])
    assert status == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["certified"] and summary["iterations"] <= summary["k_bar"]
    rows = _rows(out / "log.csv")
    assert rows[0] == CSV_FIELDS
    assert len(rows) - 1 == summary["iterations"]
    printed = json.loads(capsys.readouterr().out)
    assert printed["certified"] is True


def test_rerun_is_identical_apart_from_timings(tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_cli(["solve", "--config", str(CONFIGS / "example2.json"), "--out", str(out)]) == 0
        rows = _rows(out / "log.csv")
        i = rows[0].index("elapsed_ms")
        runs.append(([r[:i] + r[i + 1:] for r in rows],
                     json.loads((out / "summary.json").read_text())["x_out"]))
    assert runs[0] == runs[1]


def test_certify_saved_point_and_a_bad_one(tmp_path):
    out = tmp_path / "run"
    cfg = str(CONFIGS / "example2.json")
    assert run_cli(["solve", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert run_cli(["certify", "--config", cfg, "--out", str(out)]) == EXIT_OK
    # a point far from stationary fails the certificate at a tight tolerance
    data = json.loads(Path(cfg).read_text())
    data["solver.epsilon"] = 1e-3
    bad = _write(tmp_path, data)
    point = tmp_path / "pt.json"
    point.write_text("[0.9, -0.9]")
    assert run_cli(["certify", "--config", bad, "--point", str(point)]) == EXIT_CERT


def test_sweep_rows_and_slope(tmp_path, capsys):
    out = tmp_path / "sweep"
    status = run_cli(["sweep", "--config", str(CONFIGS / "bilinear_sweep.json"), "--out", str(out)])
    assert status == EXIT_OK
    rows = _rows(out / "sweep.csv")
    assert rows[0] == SWEEP_FIELDS and len(rows) == 6
    eps = [float(r[0]) for r in rows[1:]]
    assert eps == sorted(eps, reverse=True)
    result = json.loads((out / "sweep.json").read_text())
    assert 0.3 <= result["slope"]["dual_calls"] <= 0.9


def test_parallel_sweep_matches_serial(tmp_path):
    cfg = json.loads((CONFIGS / "bilinear_sweep.json").read_text())
    cfg = {k: v for k, v in cfg.items() if not k.startswith("sweep.")}
    cfg.update({"sweep.epsilons": [0.1, 0.05, 0.02], "sweep.target": "subproblem"})
    path = _write(tmp_path, cfg)
    for name, par in (("s", "1"), ("p", "2")):
        assert run_cli(["sweep", "--config", path, "--out", str(tmp_path / name),
                        "--parallel", par]) == EXIT_OK
    strip = lambda rows: [r[:4] for r in rows]
    assert strip(_rows(tmp_path / "s" / "sweep.csv")) == strip(_rows(tmp_path / "p" / "sweep.csv"))


def test_loglog_slope():
    assert loglog_slope([1e-1, 1e-2, 1e-3], [10, 100, 1000]) == pytest.approx(1.0)
    assert loglog_slope([1e-1, 1e-3], [10, 100]) == pytest.approx(0.5)


@pytest.mark.parametrize("patch, field", [
    ({"solver.epsilon": -1.0}, "solver.epsilon"),
    ({"solver.mode": "CaseIV"}, "solver.mode"),
    ({"solver.seed": "x"}, "solver.seed"),
    ({"problem.family": "nope"}, "problem.family"),
    ({"problem.params": {"centers": "bad"}}, "problem.params"),
    ({"solver.x1": [5.0, 5.0]}, "solver.x1"),
])
def test_malformed_configs_name_the_field(tmp_path, capsys, patch, field):
    cfg = json.loads((CONFIGS / "example2.json").read_text())
    cfg.update(patch)
    status = run_cli(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert status == EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_broken_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"problem.family": "dro",\n "solver.epsilon": }')
    assert run_cli(["solve", "--config", str(p)]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err
    assert run_cli(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert run_cli(["frobnicate"]) == EXIT_CONFIG


def test_flat_and_nested_keys_agree(tmp_path):
    nested = load_config(_write(tmp_path, {"problem": {"family": "dro", "params": {"alpha": 0.3}},
                                           "solver": {"epsilon": 0.1}}, "a.json"))
    flat = load_config(_write(tmp_path, {"problem.family": "dro", "problem.params": {"alpha": 0.3},
                                         "solver.epsilon": 0.1}, "b.json"))
    assert validate(nested) == validate(flat)
    assert validate(flat)["output.dir"] == "out" and validate(flat)["solver.seed"] == 0


def _module(args, env_level=None):
    env = dict(os.environ)
    if env_level is not None:
        env["MAXSMOOTH_LOG_LEVEL"] = env_level
    return subprocess.run([sys.executable, "-m", "maxsmooth", *args], capture_output=True,
                          text=True, env=env, timeout=600)


def test_log_level_environment(tmp_path):
    cfg = str(CONFIGS / "example2.json")
    quiet = _module(["solve", "--config", cfg, "--out", str(tmp_path / "q")])
    loud = _module(["solve", "--config", cfg, "--out", str(tmp_path / "l")], "info")
    assert quiet.returncode == loud.returncode == 0
    assert "displacement" not in quiet.stderr and "displacement" in loud.stderr
    assert _module(["selftest"], "shouty").returncode == EXIT_CONFIG


def test_selftest_passes():
    r = _module(["selftest"])
    assert r.returncode == 0
    lines = r.stdout.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_stochastic_solve_writes_seed_column(tmp_path):
    cfg = json.loads((CONFIGS / "example2_stochastic.json").read_text())
    cfg["solver.epsilon"] = 2.0  # small K keeps this quick
    out = tmp_path / "st"
    status = run_cli(["solve", "--config", _write(tmp_path, cfg), "--out", str(out), "--seed", "7"])
    assert status in (EXIT_OK, EXIT_CERT)
    rows = _rows(out / "log.csv")
    assert rows[0] == CSV_FIELDS + ["seed"] and all(r[-1] == "7" for r in rows[1:])
