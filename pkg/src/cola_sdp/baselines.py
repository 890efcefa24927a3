"""
Half-plane sampling baseline.

The Pc constraint says the terminal collision-plane point must lie outside
the ellipse r^T C^{-1} r = p. Fixing a boundary point r(theta) and replacing
the ellipse exterior by the tangent half-plane n^T r_N >= n^T r(theta), with
n = C^{-1} r(theta), leaves a convex minimum-energy problem. Every such
half-plane sits inside the exterior, so each sample cost bounds the global
optimum from above; scanning theta recovers it in the limit.

The subproblem eliminates the states through the linear rollout and is a
pure second-order cone program in the planner's scaled units (mm/s^2, km):

    min  sum_k t_k
    s.t. ||(2 u_k, t_k - 1)|| <= t_k + 1      (u_k^2 <= t_k)
         t_k <= b_u^2                          (if an upper bound is set)
         n^T R~ (d_0 + sum_k G_k u_k) >= n^T r(theta)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import SolverSettings, Status, solve
from .errors import AllSamplesInfeasible, InfeasibleSpec
from .relaxation.assembly import RowAssembler
from .relaxation.generic import RATIO_CAP
from .relaxation.planner import ManeuverPlan, Mode, TightnessReport, terminal_mahalanobis


@dataclass(frozen=True)
class HalfPlaneSample:
    theta: float
    boundary_point: np.ndarray  # m, collision-plane coordinates
    outward_normal: np.ndarray  # unit
    cost: float  # (m/s^2)^2, inf when infeasible
    feasible: bool
    status: Status = Status.OPTIMAL
    controls: np.ndarray | None = field(default=None, repr=False)  # (N-1, 3) m/s^2


@dataclass(frozen=True)
class ScanResult:
    samples: tuple
    best_index: int
    best_plan: ManeuverPlan

    @property
    def best_cost(self):
        return self.samples[self.best_index].cost

    def heatmap_rows(self):
        """(theta_rad, bx_m, bz_m, cost, feasible) per sample."""
        return [(s.theta, float(s.boundary_point[0]), float(s.boundary_point[1]), s.cost, int(s.feasible))
                for s in self.samples]


def _sqrtm_spd(c):
    w, v = np.linalg.eigh(np.asarray(c, dtype=float))
    if w[0] <= 0:
        from .errors import SingularProjectedCovariance
        raise SingularProjectedCovariance("projected covariance is not positive definite")
    return (v * np.sqrt(w)) @ v.T


def ellipse_samples(geometry, count):
    """Points sqrt(p) C^{1/2} (cos t, sin t) for ``count`` uniformly spaced angles."""
    if count < 1:
        raise ValueError("count must be >= 1")
    p = geometry.threshold
    if not p > 0:
        raise ValueError("threshold p must be positive")
    root = _sqrtm_spd(geometry.combined_cov)
    thetas = 2.0 * math.pi * np.arange(count) / count
    unit = np.vstack([np.cos(thetas), np.sin(thetas)])
    return thetas, (math.sqrt(p) * root @ unit).T


def terminal_sensitivities(model):
    """G_k = d(position_N)/d(u_k) and Phi = d(x_N)/d(x_1) of the linear model."""
    n = model.n_knots
    g = np.zeros((n - 1, 3, 3))
    acc = np.eye(6)
    for k in range(n - 2, -1, -1):
        g[k] = (acc @ model.b_mats[k])[:3]
        acc = acc @ model.a_mats[k]
    return g, acc


def _check_spec(spec):
    if spec.mode != Mode.STANDARD:
        raise InfeasibleSpec("the half-plane baseline runs in standard mode only")
    if spec.control_lower_bound is not None and spec.control_lower_bound > 0:
        raise InfeasibleSpec("the half-plane subproblem is convex only without a lower bound")


def build_halfplane_problem(spec, boundary_point, sens=None):
    """Conic problem for one boundary point; returns (problem, normal)."""
    geo = spec.geometry
    g, phi = sens if sens is not None else terminal_sensitivities(spec.model)
    nk = g.shape[0]
    su = spec.scaling.control
    sp_ = spec.scaling.position
    r = np.asarray(boundary_point, dtype=float)
    normal = np.linalg.solve(geo.combined_cov, r)
    normal /= np.linalg.norm(normal)
    proj = geo.projector
    d0 = (spec.model.reference.knots[-1].position - geo.secondary_state.position
          + (phi @ spec.initial_delta_state)[:3])

    n_u = 3 * nk
    asm = RowAssembler(n_u + nk)
    ucols = np.arange(n_u)
    # half-plane row in km, controls scaled
    coef = (normal @ proj @ g.transpose(1, 0, 2).reshape(3, n_u)) / su * sp_
    rhs = float(normal @ proj @ d0 - normal @ r) * sp_
    asm.add(ucols, -coef, rhs, "halfplane")
    if spec.control_upper_bound is not None:
        ub = spec.control_upper_bound * su
        for k in range(nk):
            asm.add([n_u + k], [1.0], ub * ub, f"upper[{k}]")
    asm.close("nonneg")
    for k in range(nk):
        t = n_u + k
        asm.add([t], [-1.0], 1.0, "head")
        for i in range(3):
            asm.add([3 * k + i], [-2.0], 0.0, "u")
        asm.add([t], [-1.0], -1.0, "tail")
        asm.close("soc")
    c = np.zeros(n_u + nk)
    c[n_u:] = 1.0
    return asm.build(c), normal


def halfplane_plan(spec, boundary_point, settings=None, theta=float("nan"), sens=None):
    """Solve the convex subproblem for one boundary point; failures are recorded, not raised."""
    _check_spec(spec)
    problem, normal = build_halfplane_problem(spec, boundary_point, sens)
    sol = solve(problem, settings or SolverSettings())
    point = np.asarray(boundary_point, dtype=float).copy()
    if sol.status != Status.OPTIMAL:
        return HalfPlaneSample(theta, point, normal, math.inf, False, sol.status)
    nk = spec.n_knots - 1
    controls = np.asarray(sol.primal[:3 * nk]).reshape(nk, 3) / spec.scaling.control
    cost = float(np.sum(controls ** 2))
    return HalfPlaneSample(theta, point, normal, cost, True, sol.status, controls)


def _plan_from_controls(spec, controls, cost):
    rollout = spec.model.rollout(spec.initial_delta_state, controls)
    achieved = terminal_mahalanobis(spec, rollout[-1])
    n = spec.n_knots
    # a point solution is rank one by construction
    report = TightnessReport(tuple([RATIO_CAP] * n), RATIO_CAP, True, ())
    return ManeuverPlan(controls, rollout, cost, report, achieved,
                        cost, achieved.mahalanobis_sq - spec.geometry.threshold, rollout)


def halfplane_scan(spec, count=100, settings=None):
    """Run :func:`halfplane_plan` at ``count`` ellipse points and keep the cheapest."""
    _check_spec(spec)
    thetas, points = ellipse_samples(spec.geometry, count)
    sens = terminal_sensitivities(spec.model)
    samples = tuple(halfplane_plan(spec, pt, settings, float(th), sens) for th, pt in zip(thetas, points))
    feasible = [i for i, s in enumerate(samples) if s.feasible]
    if not feasible:
        raise AllSamplesInfeasible(f"none of the {count} half-plane subproblems is feasible")
    best = min(feasible, key=lambda i: samples[i].cost)
    plan = _plan_from_controls(spec, samples[best].controls, samples[best].cost)
    return ScanResult(samples, best, plan)
