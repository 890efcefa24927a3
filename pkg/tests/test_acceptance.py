"""Acceptance criteria 1-11, one PASS/FAIL line each (see the end of the pytest run)."""

import math
import time

import numpy as np
import pytest

from cola_sdp import cdm
from cola_sdp import dynamics as dyn
from cola_sdp.cli import make_spec, nonlinear_terminal, solve_plan
from cola_sdp.conic import Status, solve
from cola_sdp.errors import MissingKey
from cola_sdp.relaxation.generic import solve_shor
from cola_sdp.relaxation.planner import PlannerSpec
from cola_sdp.scenario import build_scenario, load_bundled

from conftest import ACCEPTANCE, CONTINGENCY_CAPS, EXAMPLE2_LOWER, EXAMPLE2_UPPER, random_known_optimum
from test_cdm import FIXTURE, MANDATORY, drop_first, messages_equal
from test_conic import lp_problem, sdp_problem, soc_problem
from test_generic import grid_minimum, random_qcqp
from test_relaxation import equality_residual


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def timed_standard():
    t0 = time.perf_counter()
    scn = build_scenario(load_bundled())
    spec = make_spec(scn, mode="standard", target_pc=1e-6)
    plan, sol, _ = solve_plan(spec)
    return scn, spec, plan, sol, time.perf_counter() - t0


def test_criterion_01_tightness(timed_standard):
    _, spec, plan, sol, elapsed = timed_standard
    ratios = plan.tightness.per_block_eigenvalue_ratio
    ok = (sol.status == Status.OPTIMAL and spec.n_knots == 50 and len(ratios) == 50
          and min(ratios) >= 1e4 and elapsed < 300.0)
    record(1, ok, f"N=50, min eigenvalue ratio {min(ratios):.3e} (>= 1e4), pipeline {elapsed:.1f} s (< 300 s)")


def test_criterion_02_boundary(timed_standard):
    _, spec, plan, _, _ = timed_standard
    p = spec.geometry.threshold
    rel = abs(plan.achieved.mahalanobis_sq - p) / p
    record(2, rel <= 1e-4, f"|Mahalanobis^2 - p| / p = {rel:.2e} (<= 1e-4), p = {p:.6f}")


def test_criterion_03_nonlinear(timed_standard):
    scn, spec, plan, _, _ = timed_standard
    final = nonlinear_terminal(scn, plan)
    pc = spec.geometry.estimate(final.position).pc_closed_form
    err = abs(math.log10(pc) - math.log10(1e-6))
    record(3, err <= 0.3, f"nonlinear Pc {pc:.4e}, |log10 error| = {err:.4f} (<= 0.3)")


def test_criterion_04_baseline(baseline_scan, standard_run):
    _, plan, _ = standard_run
    sdp, best = plan.objective, baseline_scan.best_cost
    rel = (best - sdp) / sdp
    record(4, -1e-6 <= rel <= 0.01,
           f"100 half-plane samples: best {best:.6e} vs SDP {sdp:.6e}, excess {rel:.2e} in [-1e-6, 1e-2]")


def test_criterion_05_bounds(example2_run):
    _, plan, _ = example2_run
    norms = plan.control_norms * 1e3  # mm/s^2
    lo, hi = EXAMPLE2_LOWER * 1e3, EXAMPLE2_UPPER * 1e3
    ok = bool(np.all(norms >= lo - 1e-6) and np.all(norms <= hi + 1e-6) and plan.tightness.certified)
    record(5, ok, f"norms in [{norms.min():.6f}, {norms.max():.6f}] mm/s^2 within [{lo:g}, {hi:g}] +- 1e-6, "
                  f"certified (min ratio {plan.tightness.min_ratio:.2e})")


def test_criterion_06_contingency(contingency_runs):
    m2 = [plan.achieved.mahalanobis_sq for _, _, plan, _ in contingency_runs]
    increasing = all(a < b for a, b in zip(m2, m2[1:]))
    certified = all(plan.tightness.certified for _, _, plan, _ in contingency_runs)
    within = True
    for cap, spec, plan, _ in contingency_runs:
        bound = cap / spec.model.reference.step_seconds
        # tolerance in mm/s^2, as for the other bound checks
        within &= bool(np.all(plan.control_norms * 1e3 <= bound * 1e3 + 1e-6))
    ok = increasing and certified and within
    detail = ", ".join(f"{cap:g}: {m:.4f}" for cap, m in zip(CONTINGENCY_CAPS, m2))
    record(6, ok, f"Mahalanobis^2 by cap (m/s) {detail}; increasing={increasing}, certified={certified}, "
                  f"bounded={within}")


def test_criterion_07_conic():
    analytic = []
    for build, expected in ((lp_problem, 1.0), (soc_problem, 5.0), (sdp_problem, 5.0)):
        sol = solve(build())
        analytic.append(abs(sol.primal_obj - expected) if sol.optimal else math.inf)
    rng = np.random.default_rng(20240501)
    rand = []
    for _ in range(50):
        prob, opt = random_known_optimum(rng)
        sol = solve(prob)
        rand.append(abs(sol.primal_obj - opt) / (1 + abs(opt)) if sol.optimal else math.inf)
    ok = max(analytic) <= 1e-8 and max(rand) <= 1e-7
    record(7, ok, f"analytic LP/SOC/SDP max error {max(analytic):.1e} (<= 1e-8); "
                  f"50 random max relative error {max(rand):.1e} (<= 1e-7)")


def test_criterion_08_generic_shor():
    rng = np.random.default_rng(2024)
    worst_below, worst_tight, tight = -math.inf, 0.0, 0
    for _ in range(100):
        q, d, a, b = random_qcqp(rng)
        res = solve_shor(q, d, a, b)
        brute = grid_minimum(q, d, a, b)
        worst_below = max(worst_below, res.value - brute)
        if res.certified:
            tight += 1
            worst_tight = max(worst_tight, abs(res.value - brute))
    ok = worst_below <= 2e-3 and worst_tight <= 2e-3
    record(8, ok, f"100 QCQPs: max(relaxation - grid) {worst_below:.1e} (<= 2e-3); "
                  f"{tight} certified, max |gap| {worst_tight:.1e} (<= 2e-3)")


def test_criterion_09_conservation():
    cfg = dyn.ForceModelConfig(j2_enabled=False)
    s = dyn.StateVector(dyn.Epoch(0.0), [6.9e6, 1.0e5, -2.0e5], [100.0, 6.5e3, 3.9e3])
    out = dyn.propagate(s, dyn.orbital_period(s, cfg.mu), cfg)
    e0, e1 = dyn.specific_energy(s, cfg.mu), dyn.specific_energy(out, cfg.mu)
    h0, h1 = dyn.angular_momentum(s), dyn.angular_momentum(out)
    de = abs(e1 - e0) / abs(e0)
    dh = np.linalg.norm(h1 - h0) / np.linalg.norm(h0)
    record(9, de <= 1e-9 and dh <= 1e-9, f"one orbit: energy drift {de:.1e}, angular momentum drift {dh:.1e} (<= 1e-9)")


def test_criterion_10_assembly_roundtrip():
    base = load_bundled()
    worst = {}
    for n in (3, 10, 50):
        spec = make_spec(build_scenario(base.with_overrides(n_knots=n)), mode="standard", target_pc=1e-6)
        rng = np.random.default_rng(n)
        dx1 = np.r_[rng.normal(scale=50.0, size=3), rng.normal(scale=0.05, size=3)]
        spec = PlannerSpec(spec.model, spec.geometry, initial_delta_state=dx1)
        worst[n] = equality_residual(spec, rng.normal(scale=2e-5, size=(n - 1, 3)))
    ok = max(worst.values()) <= 1e-9
    record(10, ok, "max equality residual " + ", ".join(f"N={n}: {r:.1e}" for n, r in worst.items()) + " (<= 1e-9)")


def test_criterion_11_cdm():
    text = FIXTURE.read_text()
    msg = cdm.parse_cdm(text)
    roundtrip = messages_equal(cdm.parse_cdm(cdm.format_cdm(msg)), msg)
    matched = 0
    for key in MANDATORY:
        try:
            cdm.parse_cdm(drop_first(text, key))
        except MissingKey as exc:
            matched += exc.name == key
    ok = roundtrip and matched == len(MANDATORY)
    record(11, ok, f"round trip {'exact' if roundtrip else 'differs'}; {matched}/{len(MANDATORY)} "
                   "mandatory-key deletions raise the matching MissingKey")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
