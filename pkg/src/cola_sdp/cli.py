"""
Command-line front end.

Commands: ``screen``, ``plan``, ``plan-contingency``, ``baseline`` and
``dump-problem``. Each reads a JSON scenario config (the bundled scenario if
``--config`` is omitted), writes a JSON report plus plot-ready CSVs into
``--out`` and exits with

    0 success, 2 input error, 3 solver failure, 4 uncertified relaxation.

JSON reports are SI with unit-suffixed keys; CSV files use km and mm/s^2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import dynamics as dyn
from .baselines import ellipse_samples, halfplane_scan
from .conic import SolverSettings, solve
from .errors import ColaError, NotOptimal
from .relaxation import Mode, PlannerSpec, build_sdp, extract_solution
from .scenario import ConfigError, build_scenario, bundled_config_path, load_config

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_UNCERTIFIED = 4

ELLIPSE_POINTS = 361

log = logging.getLogger(__name__)


class CommandError(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code = code
        self.kind = kind


# -- shared pieces ----------------------------------------------------------------------

def _header(cfg, command):
    return {
        "command": command,
        "config_sha256": cfg.digest(),
        "config_source": cfg.source,
        "scenario": cfg.values,
        "version": __version__,
    }


def _bounds_si(cfg):
    ub = cfg.get("control_upper_mmps2")
    lb = cfg.get("control_lower_mmps2")
    return (None if ub is None else ub * 1e-3), (None if lb is None else lb * 1e-3)


def make_spec(scn, mode=None, target_pc=None, upper=None, lower=None, use_config_bounds=True):
    cfg = scn.config
    ub_cfg, lb_cfg = _bounds_si(cfg) if use_config_bounds else (None, None)
    return PlannerSpec(
        scn.model,
        scn.geometry(target_pc),
        control_upper_bound=upper if upper is not None else ub_cfg,
        control_lower_bound=lower if lower is not None else lb_cfg,
        mode=Mode(mode or cfg["mode"]),
        penalty_weight=float(cfg["alpha"]),
    )


def solve_plan(spec, settings=None):
    """build -> solve -> extract; returns (plan, solution, stats)."""
    t0 = time.perf_counter()
    problem, layout = build_sdp(spec)
    t1 = time.perf_counter()
    sol = solve(problem, settings or SolverSettings())
    t2 = time.perf_counter()
    stats = {
        "status": sol.status.value,
        "iterations": int(sol.iterations),
        "primal_residual": float(sol.primal_res),
        "dual_residual": float(sol.dual_res),
        "relative_gap": float(sol.gap),
        "rows": int(problem.m),
        "columns": int(problem.n),
        "build_time_s": t1 - t0,
        "solve_time_s": t2 - t1,
    }
    plan = extract_solution(sol, layout, spec)
    return plan, sol, stats


def nonlinear_terminal(scn, plan):
    """Re-propagate the full force model under the zero-order-hold controls."""
    ref = scn.model.reference
    start = ref.knots[0]
    states = dyn.propagate_controls(start, plan.controls, ref.step_seconds, scn.force_model)
    return states[-1]


def _estimate_dict(prefix, est):
    return {
        f"{prefix}_pc": est.pc_closed_form,
        f"{prefix}_mahalanobis_sq": est.mahalanobis_sq,
    }


def plan_summary(scn, spec, plan, stats):
    geo = spec.geometry
    step = scn.model.reference.step_seconds
    final = nonlinear_terminal(scn, plan)
    nonlinear = geo.estimate(final.position)
    out = {
        "mode": spec.mode.value,
        "target_pc": geo.target_pc,
        "threshold_p": geo.threshold,
        "control_upper_bound_mps2": spec.control_upper_bound,
        "control_lower_bound_mps2": spec.control_lower_bound,
        "alpha": spec.penalty_weight,
        "objective_m2ps4": plan.objective,
        "total_delta_v_mps": plan.total_delta_v(step),
        "max_control_mps2": float(np.max(plan.control_norms)),
        "tightness": {
            "min_ratio": plan.tightness.min_ratio,
            "certified": plan.tightness.certified,
            "repeated_blocks": list(plan.tightness.repeated_blocks),
            "per_knot_ratio": list(plan.tightness.per_block_eigenvalue_ratio),
        },
        "controls_mps2": [[float(v) for v in row] for row in plan.controls],
        "solver": stats,
    }
    out.update(_estimate_dict("achieved_linear", plan.achieved))
    out.update(_estimate_dict("achieved_nonlinear", nonlinear))
    return out, final


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_controls_csv(path, plan, step):
    rows = []
    for k, u in enumerate(plan.controls):
        mm = u * 1e3
        rows.append((k * step, *(float(v) for v in mm), float(np.linalg.norm(mm))))
    _write_csv(path, ("t_s", "ax_mmps2", "ay_mmps2", "az_mmps2", "norm"), rows)


def write_tightness_csv(path, plan):
    rows = [(k, r) for k, r in enumerate(plan.tightness.per_block_eigenvalue_ratio)]
    _write_csv(path, ("knot", "ratio"), rows)


def write_bplane_csv(path, scn, spec, plan, final_state):
    geo = spec.geometry
    _, pts = ellipse_samples(geo, ELLIPSE_POINTS)
    pts = np.vstack([pts, pts[:1]])
    rows = [("target_ellipse", float(x) / 1e3, float(z) / 1e3) for x, z in pts]
    unman = geo.bplane_point(spec.model.reference.knots[-1].position)
    lin = geo.bplane_point(spec.model.reference.knots[-1].position + plan.rollout[-1][:3])
    nonlin = geo.bplane_point(final_state.position)
    rows.append(("secondary", 0.0, 0.0))
    rows.append(("unmaneuvered", unman[0] / 1e3, unman[1] / 1e3))
    rows.append(("maneuvered_linear", lin[0] / 1e3, lin[1] / 1e3))
    rows.append(("maneuvered_nonlinear", nonlin[0] / 1e3, nonlin[1] / 1e3))
    _write_csv(path, ("kind", "bx_km", "bz_km"), rows)


# -- commands ---------------------------------------------------------------------------

def cmd_screen(cfg, out_dir=None):
    scn = build_scenario(cfg)
    est = scn.initial_estimate()
    frame, c = scn.frame_and_covariance()
    dr = scn.primary.state.position - scn.secondary.state.position
    rb = frame.projector @ dr
    report = _header(cfg, "screen")
    report.update({
        "tca": scn.primary.state.epoch.to_iso(6),
        "initial_pc": est.pc_closed_form,
        "initial_mahalanobis_sq": est.mahalanobis_sq,
        "miss_distance_m": float(np.linalg.norm(dr)),
        "bplane_primary_m": [float(v) for v in rb],
        "bplane_secondary_m": [0.0, 0.0],
        "combined_covariance_m2": c.tolist(),
        "hard_body_radius_m": scn.hard_body_radius,
        "relative_speed_mps": float(np.linalg.norm(scn.primary.state.velocity - scn.secondary.state.velocity)),
        "exceeds_target": bool(est.pc_closed_form > cfg["target_pc"]),
    })
    if out_dir:
        _write_json(os.path.join(out_dir, "screen.json"), report)
    return report, EXIT_OK


def cmd_plan(cfg, out_dir=None, settings=None, scn=None):
    scn = scn or build_scenario(cfg)
    spec = make_spec(scn)
    report = _header(cfg, "plan")
    report["initial_pc"] = scn.initial_estimate().pc_closed_form
    try:
        plan, _, stats = solve_plan(spec, settings)
    except NotOptimal as exc:
        raise CommandError(EXIT_SOLVER, "SolverFailure", str(exc)) from None
    summary, final = plan_summary(scn, spec, plan, stats)
    report.update(summary)
    code = EXIT_OK if plan.tightness.certified else EXIT_UNCERTIFIED
    if code == EXIT_UNCERTIFIED:
        report["message"] = ("relaxation is not certified rank-one; the extracted controls are not "
                             "guaranteed optimal. Consider contingency mode (plan-contingency).")
    if out_dir:
        step = scn.model.reference.step_seconds
        _write_json(os.path.join(out_dir, "plan.json"), report)
        write_controls_csv(os.path.join(out_dir, "controls.csv"), plan, step)
        write_tightness_csv(os.path.join(out_dir, "tightness.csv"), plan)
        write_bplane_csv(os.path.join(out_dir, "bplane.csv"), scn, spec, plan, final)
    return report, code, plan


def cmd_plan_contingency(cfg, out_dir=None, settings=None, scn=None):
    scn = scn or build_scenario(cfg)
    caps = list(cfg["dv_caps_mps"])
    step = scn.model.reference.step_seconds
    report = _header(cfg, "plan-contingency")
    report["initial_pc"] = scn.initial_estimate().pc_closed_form
    report["step_s"] = step
    runs, plans, code = [], [], EXIT_OK
    for cap in caps:
        spec = make_spec(scn, mode="contingency", upper=cap / step, use_config_bounds=False)
        try:
            plan, _, stats = solve_plan(spec, settings)
        except NotOptimal as exc:
            runs.append({"dv_cap_mps": cap, "error": str(exc)})
            plans.append(None)
            code = max(code, EXIT_SOLVER)
            continue
        summary, final = plan_summary(scn, spec, plan, stats)
        summary["dv_cap_mps"] = cap
        runs.append(summary)
        plans.append(plan)
        if not plan.tightness.certified and code == EXIT_OK:
            code = EXIT_UNCERTIFIED
        if out_dir:
            tag = f"cap_{cap:.6g}".replace(".", "p")
            write_controls_csv(os.path.join(out_dir, f"controls_{tag}.csv"), plan, step)
            write_tightness_csv(os.path.join(out_dir, f"tightness_{tag}.csv"), plan)
            write_bplane_csv(os.path.join(out_dir, f"bplane_{tag}.csv"), scn, spec, plan, final)
    report["runs"] = runs
    if out_dir:
        _write_json(os.path.join(out_dir, "plan_contingency.json"), report)
    return report, code, plans


def cmd_baseline(cfg, out_dir=None, settings=None, scn=None):
    scn = scn or build_scenario(cfg)
    spec = make_spec(scn, mode="standard")
    count = int(cfg["baseline_count"])
    report = _header(cfg, "baseline")
    try:
        plan, _, stats = solve_plan(spec, settings)
    except NotOptimal as exc:
        raise CommandError(EXIT_SOLVER, "SolverFailure", str(exc)) from None
    t0 = time.perf_counter()
    scan = halfplane_scan(spec, count, settings)
    elapsed = time.perf_counter() - t0
    sdp = plan.objective
    report.update({
        "count": count,
        "sdp_objective_m2ps4": sdp,
        "sdp_certified": plan.tightness.certified,
        "baseline_best_cost_m2ps4": scan.best_cost,
        "baseline_best_theta_rad": scan.samples[scan.best_index].theta,
        "relative_excess": (scan.best_cost - sdp) / sdp if sdp > 0 else float("nan"),
        "infeasible_samples": sum(1 for s in scan.samples if not s.feasible),
        "scan_time_s": elapsed,
        "solver": stats,
    })
    if out_dir:
        _write_json(os.path.join(out_dir, "baseline.json"), report)
        rows = [(th, bx, bz, (c if math.isfinite(c) else "inf"), f)
                for th, bx, bz, c, f in scan.heatmap_rows()]
        _write_csv(os.path.join(out_dir, "baseline_heatmap.csv"),
                   ("theta_rad", "bx_m", "bz_m", "cost", "feasible"), rows)
    return report, EXIT_OK, (plan, scan)


def cmd_dump_problem(cfg, out_dir=None, scn=None):
    scn = scn or build_scenario(cfg)
    spec = make_spec(scn)
    problem, _ = build_sdp(spec)
    text = problem.dumps()
    report = _header(cfg, "dump-problem")
    report.update({"rows": problem.m, "columns": problem.n,
                   "cones": [[k.kind, k.size] for k in problem.cones]})
    if out_dir:
        with open(os.path.join(out_dir, "problem.txt"), "w") as fh:
            fh.write(text)
        _write_json(os.path.join(out_dir, "dump_problem.json"), report)
    return report, EXIT_OK, text


# -- argument handling ------------------------------------------------------------------

def _caps(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cap list {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("caps must be positive")
    return vals


def build_parser():
    parser = argparse.ArgumentParser(prog="cola-sdp", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("screen", "report initial Pc and encounter geometry"),
        ("plan", "plan a minimum-energy maneuver (standard mode unless configured)"),
        ("plan-contingency", "contingency-mode plans for each per-step delta-v cap"),
        ("baseline", "half-plane sampling baseline next to the SDP optimum"),
        ("dump-problem", "write the conic problem in the plain-text dump format"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="scenario JSON (default: bundled scenario)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--target-pc", type=float, default=None)
        p.add_argument("--knots", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None, help="contingency penalty weight")
        p.add_argument("--dv-cap", type=_caps, default=None,
                       help="comma-separated per-step delta-v caps, m/s (b_u = cap / step)")
        p.add_argument("--accel-upper-mmps2", type=float, default=None,
                       help="per-knot acceleration upper bound, mm/s^2")
        p.add_argument("--accel-lower-mmps2", type=float, default=None,
                       help="per-knot acceleration lower bound, mm/s^2")
        p.add_argument("--mode", choices=("standard", "contingency"), default=None)
        p.add_argument("--count", type=int, default=None, help="baseline sample count")
        p.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    return parser


def _config_from_args(args):
    cfg = load_config(args.config or bundled_config_path())
    return cfg.with_overrides(
        target_pc=args.target_pc,
        n_knots=args.knots,
        alpha=args.alpha,
        dv_caps_mps=args.dv_cap,
        control_upper_mmps2=args.accel_upper_mmps2,
        control_lower_mmps2=args.accel_lower_mmps2,
        mode=args.mode,
        baseline_count=args.count,
    )


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    settings = SolverSettings(verbose=args.verbose)
    try:
        cfg = _config_from_args(args)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "screen":
            report, code = cmd_screen(cfg, args.out)
        elif args.command == "plan":
            report, code, _ = cmd_plan(cfg, args.out, settings)
        elif args.command == "plan-contingency":
            report, code, _ = cmd_plan_contingency(cfg, args.out, settings)
        elif args.command == "baseline":
            report, code, _ = cmd_baseline(cfg, args.out, settings)
        else:
            report, code, _ = cmd_dump_problem(cfg, args.out)
    except CommandError as exc:
        return _fail(exc.code, exc.kind, str(exc))
    except (ConfigError, ColaError, OSError, ValueError) as exc:
        return _fail(EXIT_INPUT, type(exc).__name__, str(exc))
    summary = {k: report[k] for k in sorted(report) if k not in ("scenario", "controls_mps2", "runs", "tightness")}
    print(json.dumps(summary, sort_keys=True, default=_json_default))
    if code == EXIT_UNCERTIFIED:
        sys.stderr.write(report.get("message", "uncertified relaxation; consider contingency mode") + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
