import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from advlqr import cli
from advlqr.config import (
    BOEING747_A,
    BOEING747_B,
    ConfigError,
    builtin_system,
    config_from_dict,
    load_config,
    parse_matrix,
)
from advlqr.synthesis import lqr_gain


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "advlqr.cli", *args], capture_output=True, text=True, cwd=cwd)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f, strict=True))


def test_builtin_matrices_are_verbatim():
    assert BOEING747_A == [
        [0.99, 0.03, -0.02, -0.32],
        [0.01, 0.47, 4.7, 0.0],
        [0.02, -0.06, 0.4, 0.0],
        [0.01, -0.04, 0.72, 0.99],
    ]
    assert BOEING747_B == [[0.01, 0.99], [-3.44, 1.66], [-0.83, 0.44], [-0.47, 0.25]]
    s = builtin_system("integrator(0.3)")
    assert np.array_equal(s.A, [[1.0, 0.3], [0.0, 1.0]])
    assert np.array_equal(s.B, [[0.0], [1.0]])
    b = builtin_system("boeing747")
    assert np.array_equal(b.Q, np.eye(4)) and np.array_equal(b.R, np.eye(2))
    with pytest.raises(ConfigError):
        builtin_system("pendulum")


def test_ragged_matrix_names_field():
    with pytest.raises(ConfigError, match=r"system\.A: row 2"):
        config_from_dict({"system": {"A": [[1.0, 0.0], [1.0]], "B": [[1.0], [1.0]], "Q": 1, "R": 1}})
    with pytest.raises(ConfigError, match="B"):
        parse_matrix([[1.0], ["x"]], "B")


def test_grid_validation():
    with pytest.raises(ConfigError, match="strictly increasing"):
        config_from_dict({"rho_grid": [0.3, 0.3]})
    cfg = config_from_dict({"epsilon_grid": {"start": 0.01, "stop": 0.1, "num": 10}})
    assert len(cfg.epsilon_grid) == 10
    with pytest.raises(ConfigError, match="horizon"):
        config_from_dict({"horizon": 0})
    with pytest.raises(ConfigError, match="unknown field"):
        config_from_dict({"epsilonn": 0.1})


def test_toml_syntax_error_has_line(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('epsilon = 0.5\nsystem = "boeing747\n')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)


def test_synth_json_round_trip(tmp_path):
    out = tmp_path / "c.json"
    assert cli.main(["synth", "--system", "boeing747", "--epsilon", "0.5", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert abs(data["adversary_power"] - 0.5) <= 1e-4 * 0.5
    cfg = config_from_dict({"system": "boeing747", "epsilon": 0.5})
    direct = cli.cmd_synth(cfg)
    back = cli.read_controller(out)
    for k in ("K", "Delta", "P", "M"):
        assert np.array_equal(back[k], direct[k])
    assert back["gamma_star"] == direct["gamma_star"]


def test_synth_tiny_budget_is_lqr():
    data = cli.cmd_synth(config_from_dict({"system": "integrator(1)", "epsilon": 1e-8}))
    K_star = lqr_gain(builtin_system("integrator(1)"))[0]
    assert np.allclose(data["K"], K_star, atol=1e-3)


def test_synth_zero_budget_writes_null_gamma(tmp_path):
    out = tmp_path / "c.json"
    assert cli.main(["synth", "--system", "integrator(1)", "--epsilon", "0", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["gamma_star"] is None


def test_eval_with_controller_file(tmp_path):
    c = tmp_path / "c.json"
    cli.main(["synth", "--system", "integrator(1)", "--epsilon", "0.1", "--out", str(c)])
    cfg = tmp_path / "eval.toml"
    cfg.write_text(f'controller = "{c.as_posix()}"\nepsilon = 0.1\nhorizon = 2000\ntrials = 4\n')
    out = tmp_path / "e.json"
    assert cli.main(["eval", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    synth = json.loads(c.read_text())
    assert rep["ac"] == pytest.approx(synth["optimal_cost"], rel=1e-6)
    assert rep["nc"] <= rep["ac"]


def test_tradeoff_curve_single_point(tmp_path):
    out = tmp_path / "curve.csv"
    assert cli.main(["tradeoff-curve", "--config", str(_toml(tmp_path, "epsilon_grid = [0.1]")), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["system", "rho", "epsilon_synth", "nc", "ac_at_eval_epsilon"]
    assert len(rows) == 2
    assert (tmp_path / "curve.png").exists()


def test_tradeoff_curve_matched_budget_minimizes_ac():
    header, rows, _ = cli.cmd_tradeoff_curve(config_from_dict({"system": "integrator(1.0)"}))
    ac = [r[4] for r in rows]
    nc = [r[3] for r in rows]
    assert len(rows) == 21
    assert ac[-1] == min(ac)
    assert all(b >= a - 1e-9 for a, b in zip(nc, nc[1:]))


def test_tradeoff_curve_rejects_grid_beyond_eval_budget():
    with pytest.raises(ConfigError):
        cli.cmd_tradeoff_curve(config_from_dict({"epsilon_grid": [0.05, 0.2], "eval_epsilon": 0.1}))


def test_tradeoff_envelope_default_grid():
    header, rows, _ = cli.cmd_tradeoff_envelope(config_from_dict({}))
    assert len(rows) == 10
    assert rows[0][0] == pytest.approx(0.3) and rows[-1][0] == pytest.approx(1.2)
    assert rows[0][5] > rows[7][5]


def test_tradeoff_envelope_single_rho():
    header, rows, _ = cli.cmd_tradeoff_envelope(config_from_dict({"rho_grid": [0.5]}))
    assert len(rows) == 1


def test_benchmark_small(tmp_path):
    out = tmp_path / "bench"
    args = ["benchmark", "--trials", "1", "--horizon", "10", "--seed", "3", "--out", str(out)]
    assert cli.main(args) == 0
    for regime in cli.REGIMES:
        rows = read_csv(out / f"benchmark_{regime}.csv")
        assert rows[0] == ["t", "cost_h2", "cost_hinf", "cost_adv"]
        assert len(rows) == 11
        assert (out / f"benchmark_{regime}.png").exists()
    meta = json.loads((out / "benchmark_meta.json").read_text())
    assert "mixed" in meta["note"]


def test_benchmark_stdout_long_format():
    r = run_cli("benchmark", "--trials", "1", "--horizon", "5")
    assert r.returncode == 0
    rows = list(csv.reader(io.StringIO(r.stdout)))
    assert rows[0] == ["regime", "t", "cost_h2", "cost_hinf", "cost_adv"]
    assert len(rows) == 1 + 3 * 5


def test_bounds_rows(tmp_path):
    cfg = _toml(tmp_path, 'system = "integrator(1.0)"\ngamma_multipliers = [2.0, 100.0, 1000.0, 10000.0]')
    out = tmp_path / "b.csv"
    assert cli.main(["bounds", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out)
    h = rows[0]
    recs = [dict(zip(h, r)) for r in rows[1:]]
    assert recs[0]["upper_status"] == "precondition_failed"
    assert float(recs[0]["upper_threshold"]) > 0
    ok = [r for r in recs if r["upper_status"] == "ok"]
    assert ok
    for r in ok:
        assert float(r["lower_bound"]) <= float(r["exact_gap"]) <= float(r["upper_bound"])
    gs = [float(r["gamma"]) for r in ok]
    ub = [float(r["upper_bound"]) for r in ok]
    assert np.polyfit(np.log(gs), np.log(ub), 1)[0] == pytest.approx(-4, abs=0.2)


def test_exit_codes(tmp_path):
    bad = _toml(tmp_path, 'system = {A = [[1.0, 0.0], [1.0]], B = [[0.0], [1.0]], Q = 1, R = 1}', "bad.toml")
    r = run_cli("synth", "--config", str(bad))
    assert r.returncode == 2 and "system.A" in r.stderr
    low = _toml(tmp_path, 'system = "integrator(1.0)"\ngamma_grid = [1.0, 2.0]', "low.toml")
    r = run_cli("bounds", "--config", str(low))
    assert r.returncode == 3
    r = run_cli("synth", "--config", str(tmp_path / "missing.toml"))
    assert r.returncode == 2


def _toml(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text + "\n")
    return p
