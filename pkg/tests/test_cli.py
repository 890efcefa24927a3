import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cola_sdp import cli
from cola_sdp.conic import ConicProblem, SolverSettings
from cola_sdp.relaxation.planner import build_sdp
from cola_sdp.scenario import bundled_config_path, load_bundled


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_screen(capsys, tmp_path):
    code, out, _ = run(capsys, "screen", "--out", str(tmp_path))
    assert code == cli.EXIT_OK
    summary = json.loads(out)
    assert summary["initial_pc"] == pytest.approx(1e-5, rel=0.05)
    report = json.loads((tmp_path / "screen.json").read_text())
    assert report["bplane_secondary_m"] == [0.0, 0.0]
    assert report["config_sha256"] == load_bundled().digest()
    assert report["exceeds_target"] is True


def test_reports_deterministic(tmp_path):
    a, _ = cli.cmd_screen(load_bundled())
    b, _ = cli.cmd_screen(load_bundled())
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_missing_cdm_exit_2(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"cdm_path": "absent.cdm"}))
    code, _, err = run(capsys, "screen", "--config", str(cfg), "--out", str(tmp_path))
    assert code == cli.EXIT_INPUT
    msg = json.loads(err)
    assert msg["exit_code"] == 2 and "absent.cdm" in msg["message"]


def test_missing_config_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "screen", "--config", str(tmp_path / "none.json"))
    assert code == 2 and "none.json" in err


def test_unreachable_target_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "plan", "--target-pc", "1e-3", "--knots", "5", "--out", str(tmp_path))
    assert code == 2 and "TargetUnreachable" in err


def test_dump_problem(capsys, tmp_path):
    code, out, _ = run(capsys, "dump-problem", "--knots", "5", "--out", str(tmp_path))
    assert code == 0
    text = (tmp_path / "problem.txt").read_text()
    loaded = ConicProblem.loads(text)
    scn = cli.build_scenario(load_bundled().with_overrides(n_knots=5))
    direct, _ = build_sdp(cli.make_spec(scn))
    assert loaded.dumps() == direct.dumps()
    assert json.loads(out)["rows"] == direct.m


def test_plan_small(capsys, tmp_path):
    code, out, _ = run(capsys, "plan", "--knots", "12", "--out", str(tmp_path))
    assert code == 0
    report = json.loads((tmp_path / "plan.json").read_text())
    p = report["threshold_p"]
    assert abs(report["achieved_linear_mahalanobis_sq"] - p) / p <= 1e-4
    assert report["tightness"]["certified"]
    rows = read_csv(tmp_path / "controls.csv")
    assert rows[0] == ["t_s", "ax_mmps2", "ay_mmps2", "az_mmps2", "norm"] and len(rows) == 12
    assert read_csv(tmp_path / "tightness.csv")[0] == ["knot", "ratio"]
    kinds = {r[0] for r in read_csv(tmp_path / "bplane.csv")[1:]}
    assert {"target_ellipse", "secondary", "unmaneuvered", "maneuvered_linear",
            "maneuvered_nonlinear"} <= kinds


def test_zero_risk_plan():
    # initial Pc 1e-5 is already below a target just above it
    cfg = load_bundled().with_overrides(n_knots=10, target_pc=1.005e-5)
    report, code, plan = cli.cmd_plan(cfg)
    assert code == 0
    assert plan.objective == pytest.approx(0.0, abs=1e-12)
    # interior-point residue only: a real plan here is about 1 m/s
    assert report["total_delta_v_mps"] < 1e-4


def test_solver_failure_exit_3():
    cfg = load_bundled().with_overrides(n_knots=5)
    with pytest.raises(cli.CommandError) as info:
        cli.cmd_plan(cfg, settings=SolverSettings(max_iterations=2))
    assert info.value.code == cli.EXIT_SOLVER


def test_uncertified_exit_4():
    # a lower bound far above what the encounter needs leaves a non-unique optimal face
    cfg = load_bundled().with_overrides(n_knots=10, control_lower_mmps2=0.5, control_upper_mmps2=1.0)
    report, code, plan = cli.cmd_plan(cfg)
    assert code == cli.EXIT_UNCERTIFIED
    assert not plan.tightness.certified and "contingency" in report["message"].lower()


def test_contingency_command(tmp_path):
    cfg = load_bundled().with_overrides(n_knots=12, dv_caps_mps=[0.004, 0.01])
    report, code, plans = cli.cmd_plan_contingency(cfg, str(tmp_path))
    assert code == 0 and len(report["runs"]) == 2
    step = report["step_s"]
    for cap, plan in zip((0.004, 0.01), plans):
        assert plan.control_norms.max() <= cap / step * (1 + 1e-6)
    m = [r["achieved_linear_mahalanobis_sq"] for r in report["runs"]]
    assert m[0] < m[1]
    assert (tmp_path / "plan_contingency.json").exists()


def test_baseline_command(tmp_path):
    cfg = load_bundled().with_overrides(n_knots=8, baseline_count=12)
    report, code, (plan, scan) = cli.cmd_baseline(cfg, str(tmp_path))
    assert code == 0
    assert report["baseline_best_cost_m2ps4"] >= report["sdp_objective_m2ps4"] * (1 - 1e-6)
    rows = read_csv(tmp_path / "baseline_heatmap.csv")
    assert rows[0] == ["theta_rad", "bx_m", "bz_m", "cost", "feasible"] and len(rows) == 13


def test_dv_cap_parser():
    args = cli.build_parser().parse_args(["plan-contingency", "--dv-cap", "0.004,0.01"])
    assert args.dv_cap == [0.004, 0.01]
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["plan-contingency", "--dv-cap", "-1"])


def test_console_script_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "cola_sdp.cli", "screen", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["command"] == "screen"
