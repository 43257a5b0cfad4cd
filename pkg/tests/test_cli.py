import csv
import io
import json
import math

import pytest
from click.testing import CliRunner

from foldnoise.airy import YSTAR
from foldnoise.cli import _grid, main
from foldnoise.manifest import sha256_file

MC_COLUMNS = [
    "sigma", "x_fin", "n_hit", "n_censored", "mean_ytau", "var_ytau", "L_D", "L_V",
    "M_D", "M_V", "se_mean", "se_var", "D_theory", "V_theory",
]


@pytest.fixture
def runner(monkeypatch):
    monkeypatch.delenv("FOLDNOISE_THREADS", raising=False)
    return CliRunner()


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


def _ok(runner, args):
    res = runner.invoke(main, args)
    assert res.exit_code == 0, res.output
    return res


def test_grid_keeps_endpoint():
    g = _grid(-6.0, YSTAR, 0.02)
    assert g[0] == -6.0 and g[-1] == YSTAR
    assert _grid(0.0, 1.0, 0.25) == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_airy_table(runner):
    rows = _csv(_ok(runner, ["airy", "table", "--zmin", "-1", "--zmax", "1", "--step", "0.5"]).output)
    assert rows[0] == ["z", "Ai", "Bi", "dAi", "dBi", "wronskian_residual"]
    assert len(rows) == 6
    assert all(abs(float(r[5])) < 1e-13 for r in rows[1:])


def test_det_trajectory(runner):
    rows = _csv(_ok(runner, ["det", "trajectory", "--xfin", "2", "--step", "0.1"]).output)
    assert rows[0] == ["t", "x", "y"]
    assert float(rows[1][1]) == -3.0 and float(rows[1][2]) == -2.0
    assert float(rows[-1][1]) == pytest.approx(2.0, abs=1e-9)


def test_dv_table_and_limit_curve(runner):
    rows = _csv(_ok(runner, ["dv", "table", "--xfin-list", "5,30"]).output)
    assert rows[0] == ["x_fin", "D", "V", "D_limit", "V_limit"]
    assert [float(r[0]) for r in rows[1:]] == [5.0, 30.0]
    assert float(rows[2][1]) == pytest.approx(0.75, abs=0.02)
    rows = _csv(_ok(runner, ["dv", "limit-curve", "--yin-range", "-1:ystar:0.5"]).output)
    assert rows[0] == ["y_in", "D_inf", "V_inf"]
    assert float(rows[-1][0]) == YSTAR
    res = runner.invoke(main, ["dv", "limit-curve", "--yin-range", "-1:2"])
    assert res.exit_code == 2


def test_mc_run_writes_csv_and_manifest(runner, tmp_path):
    out = tmp_path / "run.csv"
    _ok(runner, ["mc", "run", "--sigma", "0.25", "--paths", "200", "--dt", "1e-3", "--out", str(out)])
    rows = _csv(out.read_text())
    assert rows[0] == MC_COLUMNS
    assert len(rows) == 2 and float(rows[1][0]) == 0.25
    man = json.loads((tmp_path / "run.csv.manifest.json").read_text())
    assert man["outputs"][str(out)] == sha256_file(out)
    assert man["seed"] == 20240601 and man["config"]["n_paths"] == 200
    assert set(man["versions"]) >= {"numpy", "python", "foldnoise"}


def test_mc_sweep_grid(runner):
    res = _ok(runner, ["mc", "sweep", "--sigma-list", "0.25,0.5", "--xfin-list", "5,30", "--paths", "200",
                       "--dt", "1e-3", "--no-theory"])
    rows = _csv(res.output)
    assert [(float(r[0]), float(r[1])) for r in rows[1:]] == [(0.25, 5.0), (0.25, 30.0), (0.5, 5.0), (0.5, 30.0)]
    assert all(math.isnan(float(r[12])) for r in rows[1:])


def test_mc_help_lists_flags(runner):
    text = _ok(runner, ["mc", "run", "--help"]).output
    for flag in ("--config", "--xin", "--yin", "--xfin", "--dt", "--paths", "--seed", "--t-max", "--tube-h0",
                 "--threads", "--sigma", "--out"):
        assert flag in text


def test_usage_errors_exit_2(runner):
    assert runner.invoke(main, ["mc", "run", "--sigma", "-1"]).exit_code == 2
    assert runner.invoke(main, ["mc", "run", "--paths", "10"]).exit_code == 2
    assert runner.invoke(main, ["mc", "run", "--t-max", "5"]).exit_code == 2
    assert runner.invoke(main, ["dv", "table", "--xfin-list", "a,b"]).exit_code == 2
    assert runner.invoke(main, ["nope"]).exit_code == 2


def test_config_print_precedence(runner, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sigma = 0.25\nn_paths = 5000\n")
    text = _ok(runner, ["config", "print", "--config", str(cfg), "--sigma", "0.5"]).output
    assert "sigma=0.5\n" in text and "n_paths=5000\n" in text
    assert _ok(runner, ["config", "load", str(cfg)]).output.count("sigma=0.25") == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("sigma 0.1\n")
    res = runner.invoke(main, ["config", "load", str(bad)])
    assert res.exit_code == 2 and ":1" in res.output


def test_fpt_density_and_validate(runner):
    rows = _csv(_ok(runner, ["fpt", "density", "--grid-n", "100"]).output)
    assert rows[0] == ["t", "phi", "b0", "b", "psi"]
    assert len(rows) > 100
    rep = json.loads(_ok(runner, ["fpt", "validate", "--paths", "5000", "--dt", "1e-3", "--grid-n", "200"]).output)
    assert {"quad_mean", "quad_var", "mc_mean", "ks_distance"} <= set(rep)


def test_fpt_bridge(runner):
    rep = json.loads(_ok(runner, ["fpt", "bridge", "--paths", "2000", "--dt", "1e-4"]).output)
    assert rep["T"] == pytest.approx(0.1104, abs=1e-4)
    assert {"mc_mean", "pred_mean", "mc_second_moment", "pred_second_moment"} <= set(rep)


def test_figures_fig2_fig3(runner, tmp_path):
    _ok(runner, ["figures", "fig2", "--out-dir", str(tmp_path)])
    _ok(runner, ["figures", "fig3", "--out-dir", str(tmp_path)])
    for name in ("fig2_orbit", "fig2_slow", "fig2_manifold", "fig2_ystar", "fig3"):
        assert (tmp_path / f"{name}.csv").exists()
    man = json.loads((tmp_path / "fig3_manifest.json").read_text())
    assert len(man["outputs"]) == 1
    rows = _csv((tmp_path / "fig3.csv").read_text())
    assert float(rows[-1][0]) == YSTAR


def test_rerun_is_byte_identical(runner, tmp_path):
    args = ["mc", "run", "--sigma", "0.5", "--paths", "300", "--dt", "1e-3", "--out"]
    _ok(runner, args + [str(tmp_path / "a.csv"), "--threads", "1"])
    _ok(runner, args + [str(tmp_path / "b.csv"), "--threads", "4"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_env_threads_override(runner, monkeypatch):
    monkeypatch.setenv("FOLDNOISE_THREADS", "0")
    res = runner.invoke(main, ["mc", "run", "--paths", "200", "--dt", "1e-3", "--threads", "2"])
    assert res.exit_code == 2


def test_validate_quick_report(runner, tmp_path):
    out = tmp_path / "v.json"
    res = runner.invoke(main, ["validate", "quick", "--out", str(out)])
    rep = json.loads(out.read_text())
    assert [c["criterion"] for c in rep["criteria"]] == [1, 2, 3, 4, 7, 9]
    # the V gap at x_fin = 1e3 is 1/x_fin, above the 1e-4 tolerance
    assert res.exit_code == (0 if rep["passed"] else 1)
    by_num = {c["criterion"]: c for c in rep["criteria"]}
    assert by_num[1]["passed"] and by_num[2]["passed"]


def test_validate_detects_perturbed_ystar(runner, tmp_path):
    out = tmp_path / "p.json"
    res = runner.invoke(main, ["validate", "quick", "--perturb-ystar", "1e-3", "--out", str(out)])
    assert res.exit_code == 1
    by_num = {c["criterion"]: c for c in json.loads(out.read_text())["criteria"]}
    assert by_num[1]["details"]["wronskian_ok"] is True
    assert by_num[1]["passed"] is False
    assert by_num[3]["details"]["limit_values_ok"] is False
