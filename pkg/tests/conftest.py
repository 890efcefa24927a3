"""Shared fixtures. Planner solves take seconds each, so scenario-level results are session scoped."""

import numpy as np
import pytest

from cola_sdp import dynamics as dyn
from cola_sdp.cli import make_spec, solve_plan
from cola_sdp.conic import Cone, ConicProblem
from cola_sdp.conic.cones import svec
from cola_sdp.scenario import build_scenario, load_bundled

EXAMPLE2_TARGET = 8e-6
EXAMPLE2_LOWER = 1.38e-2 * 1e-3  # m/s^2
EXAMPLE2_UPPER = 8.64e-2 * 1e-3
CONTINGENCY_CAPS = (0.004, 0.006, 0.008, 0.010)  # m/s per step


def random_known_optimum(rng):
    """Conic instance built backwards from a complementary (x, s, z) triple.

    Slack s and dual z are chosen in each cone with s o z = 0, so x is optimal
    for b = A x + s and c = -A^T z with objective c^T x.
    """
    cones, s, z = [], [], []
    neq = int(rng.integers(0, 3))
    if neq:
        cones.append(Cone.zero(neq))
        s.append(np.zeros(neq))
        z.append(rng.normal(size=neq))
    for _ in range(int(rng.integers(1, 4))):
        kind = int(rng.integers(0, 3))
        if kind == 0:
            d = int(rng.integers(1, 5))
            cones.append(Cone.nonneg(d))
            mask = rng.random(d) < 0.5
            s.append(np.where(mask, rng.random(d) + 0.1, 0.0))
            z.append(np.where(mask, 0.0, rng.random(d) + 0.1))
        elif kind == 1:
            d = int(rng.integers(2, 5))
            cones.append(Cone.soc(d))
            u = rng.normal(size=d - 1)
            u /= np.linalg.norm(u)
            s.append((rng.random() + 0.1) * np.r_[1.0, u])
            z.append((rng.random() + 0.1) * np.r_[1.0, -u])
        else:
            d = int(rng.integers(2, 5))
            cones.append(Cone.psd(d))
            q, _ = np.linalg.qr(rng.normal(size=(d, d)))
            r = int(rng.integers(1, d))
            ev = rng.random(d) + 0.1
            s.append(svec(q[:, :r] @ np.diag(ev[:r]) @ q[:, :r].T))
            z.append(svec(q[:, r:] @ np.diag(ev[r:]) @ q[:, r:].T))
    s, z = np.concatenate(s), np.concatenate(z)
    m = s.size
    n = int(rng.integers(1, m + 1))
    a = rng.normal(size=(m, n))
    x = rng.normal(size=n)
    return ConicProblem(-a.T @ z, a, a @ x + s, cones), float(-z @ a @ x)


@pytest.fixture(scope="session")
def bundled():
    scn = build_scenario(load_bundled())
    scn.model  # linearize once
    return scn


@pytest.fixture(scope="session")
def standard_run(bundled):
    spec = make_spec(bundled, mode="standard", target_pc=1e-6)
    plan, sol, stats = solve_plan(spec)
    return spec, plan, sol


@pytest.fixture(scope="session")
def example2_run(bundled):
    spec = make_spec(bundled, mode="standard", target_pc=EXAMPLE2_TARGET,
                     upper=EXAMPLE2_UPPER, lower=EXAMPLE2_LOWER)
    plan, sol, stats = solve_plan(spec)
    return spec, plan, sol


@pytest.fixture(scope="session")
def contingency_runs(bundled):
    step = bundled.model.reference.step_seconds
    runs = []
    for cap in CONTINGENCY_CAPS:
        spec = make_spec(bundled, mode="contingency", target_pc=1e-6, upper=cap / step,
                         use_config_bounds=False)
        plan, sol, _ = solve_plan(spec)
        runs.append((cap, spec, plan, sol))
    return runs


@pytest.fixture(scope="session")
def baseline_scan(bundled):
    from cola_sdp.baselines import halfplane_scan
    spec = make_spec(bundled, mode="standard", target_pc=1e-6)
    return halfplane_scan(spec, 100)


def toy_model(n_knots=3, step=10.0):
    """Double-integrator LinearModel with a synthetic reference; cheap for planner tests."""
    a = np.eye(6)
    a[:3, 3:] = step * np.eye(3)
    b = np.vstack([0.5 * step ** 2 * np.eye(3), step * np.eye(3)])
    epoch = dyn.Epoch(0.0)
    knots = [dyn.StateVector(epoch + k * step, [7.0e6 + k, 0.0, 0.0], [0.0, 7.5e3, 0.0])
             for k in range(n_knots)]
    traj = dyn.Trajectory(tuple(knots), step)
    return dyn.LinearModel(np.repeat(a[None], n_knots - 1, 0), np.repeat(b[None], n_knots - 1, 0), traj)


# acceptance lines, printed together at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
