"""
Moment-matrix SDP for low-thrust collision avoidance.

Decision variables are the per-knot moment matrices M_k of z_k = (1, dx_k, u_k)
(terminal: z_N = (1, dx_N)), expressed in scaled units: positions in km,
velocities in m/s and controls in mm/s^2. Constraints, in canonical row order
(by knot, then class):

* zero cone: M_k[0, 0] = 1; initial condition on M_1; mean dynamics
  L_x(M_{k+1}) = A_k L_x(M_k) + B_k L_u(M_k); outer-product dynamics
  L_xx(M_{k+1}) = A L_xx A^T + A L_xu B^T + B L_ux A^T + B L_uu B^T
  (lower triangle, 21 rows per step);
* nonneg cone: tr(L_uu(M_k)) >= b_l^2 when a lower bound is set, and at the
  terminal knot either the PoC row g(M_N) >= p (standard) or the two
  epigraph rows t >= +-(g - p) (contingency);
* nonneg cone (optional, on by default): tr(L_uu(M_k)) <= b_u^2, the lifted
  form of |u_k|^2 <= b_u^2. It is redundant for rank-one points but stops the
  relaxation from buying terminal spread with control covariance once the
  mean control sits on its bound;
* second-order cone: ||L_u(M_k)|| <= b_u, written with the homogenizing head
  b_u * M_k[0, 0] so no row of A is empty;
* PSD cone: M_k.

With d = xbar_N - x_s (reference position minus secondary position) and
P = R~^T C^{-1} R~, the expected terminal Mahalanobis distance is
g = d^T P d + 2 d^T P L_x + tr(P L_xx) over the position entries of M_N.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..conic import ConicSolution
from ..conjunction import PocEstimate, poc_estimate
from ..dynamics import LinearModel
from ..errors import InfeasibleSpec, NotOptimal
from .assembly import RowAssembler
from .generic import TIGHT_RATIO, extract_rank_one
from .layout import CONTROL_DIM, STATE_DIM, STEP_BLOCK, TERMINAL_BLOCK, MomentLayout, lower_pairs

POS = slice(1, 4)


class Mode(str, enum.Enum):
    STANDARD = "standard"
    CONTINGENCY = "contingency"


@dataclass(frozen=True)
class Scaling:
    """Multipliers from SI into the conic problem's units."""

    position: float = 1e-3  # m -> km
    velocity: float = 1.0  # m/s -> m/s
    control: float = 1e3  # m/s^2 -> mm/s^2

    @property
    def state(self):
        return np.array([self.position] * 3 + [self.velocity] * 3)

    def z_scale(self, with_control=True):
        parts = [[1.0], self.state]
        if with_control:
            parts.append([self.control] * 3)
        return np.concatenate(parts)


@dataclass(frozen=True)
class PlannerSpec:
    model: LinearModel
    geometry: object  # ConjunctionGeometry
    initial_delta_state: np.ndarray = field(default_factory=lambda: np.zeros(STATE_DIM))
    control_upper_bound: float | None = None  # m/s^2, None = unbounded
    control_lower_bound: float | None = None  # m/s^2
    mode: Mode = Mode.STANDARD
    penalty_weight: float = 10.0
    scaling: Scaling = Scaling()
    lifted_upper_bound: bool = True  # also emit tr(L_uu) <= b_u^2

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        dx = np.array(self.initial_delta_state, dtype=float).reshape(STATE_DIM)
        dx.setflags(write=False)
        object.__setattr__(self, "initial_delta_state", dx)
        ub, lb = self.control_upper_bound, self.control_lower_bound
        if ub is not None and not ub > 0:
            raise InfeasibleSpec("control upper bound must be positive")
        if lb is not None:
            if lb < 0:
                raise InfeasibleSpec("control lower bound must be non-negative")
            if ub is not None and lb > ub:
                raise InfeasibleSpec(f"lower bound {lb:g} exceeds upper bound {ub:g}")
        if self.mode == Mode.CONTINGENCY and not self.penalty_weight > 0:
            raise InfeasibleSpec("contingency mode needs a positive penalty weight")

    @property
    def n_knots(self):
        return self.model.n_knots


@dataclass(frozen=True)
class TightnessReport:
    per_block_eigenvalue_ratio: tuple
    min_ratio: float
    certified: bool
    repeated_blocks: tuple = ()


@dataclass(frozen=True)
class ManeuverPlan:
    controls: np.ndarray  # (N-1, 3) m/s^2
    delta_states: np.ndarray  # (N, 6) SI, read from the moment matrices
    objective: float  # sum tr(L_uu) in (m/s^2)^2
    tightness: TightnessReport
    achieved: PocEstimate  # linear rollout of the extracted controls
    relaxation_objective: float = float("nan")  # solver objective, scaled units
    terminal_gap: float = float("nan")  # g - p of the relaxation
    rollout: np.ndarray | None = None  # (N, 6) linear rollout, SI

    @property
    def control_norms(self):
        return np.linalg.norm(self.controls, axis=1)

    def total_delta_v(self, step_seconds):
        return float(np.sum(self.control_norms) * step_seconds)


# ---------------------------------------------------------------------------


def _scaled_dynamics(spec):
    sx = spec.scaling.state
    su = spec.scaling.control
    a = spec.model.a_mats * sx[None, :, None] / sx[None, None, :]
    b = spec.model.b_mats * sx[None, :, None] / su
    return a, b


def terminal_quadratic(spec):
    """(P_s, d_s, const) of g in scaled units: g = const + 2 d_s^T P_s L_x + tr(P_s L_xx)."""
    geo = spec.geometry
    sp_ = spec.scaling.position
    weight = geo.position_weight() / sp_ ** 2
    d = spec.model.reference.knots[-1].position - geo.secondary_state.position
    d_s = d * sp_
    return weight, d_s, float(d_s @ weight @ d_s)


def _eq_close(asm):
    asm.close("zero")


def build_sdp(spec: PlannerSpec):
    """Assemble the conic problem; returns (ConicProblem, MomentLayout)."""
    n = spec.n_knots
    contingency = spec.mode == Mode.CONTINGENCY
    layout = MomentLayout(n, 1 if contingency else 0)
    a_s, b_s = _scaled_dynamics(spec)
    dx1 = spec.initial_delta_state * spec.scaling.state
    su = spec.scaling.control
    ub = None if spec.control_upper_bound is None else spec.control_upper_bound * su
    lb = None if spec.control_lower_bound is None else spec.control_lower_bound * su
    p = spec.geometry.threshold
    weight, d_s, const = terminal_quadratic(spec)
    pairs6 = lower_pairs(STATE_DIM)

    c = np.zeros(layout.n_vars)
    asm = RowAssembler(layout.n_vars)

    for k in range(n):
        dim = layout.block_dims[k]
        last = k == n - 1

        # ---- equalities
        e = np.zeros((dim, dim))
        e[0, 0] = 1.0
        asm.add(*layout.block_functional(k, e), 1.0, f"corner[{k}]")
        if k == 0:
            for i in range(STATE_DIM):
                e = np.zeros((dim, dim))
                e[1 + i, 0] = 1.0
                asm.add(*layout.block_functional(k, e), dx1[i], f"init_x[{i}]")
            for i, j in pairs6:
                e = np.zeros((dim, dim))
                e[1 + i, 1 + j] = 1.0
                asm.add(*layout.block_functional(k, e), dx1[i] * dx1[j], f"init_xx[{i},{j}]")
        if k > 0:
            # dynamics rows linking block k-1 to block k
            ak, bk = a_s[k - 1], b_s[k - 1]
            t = np.zeros((STATE_DIM, STEP_BLOCK))
            t[:, 1:1 + STATE_DIM] = ak
            t[:, 1 + STATE_DIM:] = bk
            for i in range(STATE_DIM):
                prev = np.zeros((STEP_BLOCK, STEP_BLOCK))
                prev[1:, 0] = t[i, 1:]
                cols_p, vals_p = layout.block_functional(k - 1, prev)
                cur = np.zeros((dim, dim))
                cur[1 + i, 0] = 1.0
                cols_c, vals_c = layout.block_functional(k, cur)
                asm.add(np.r_[cols_c, cols_p], np.r_[vals_c, -vals_p], 0.0, f"mean[{k}][{i}]")
            for i, j in pairs6:
                prev = np.outer(t[i], t[j])
                cols_p, vals_p = layout.block_functional(k - 1, prev)
                cur = np.zeros((dim, dim))
                cur[1 + i, 1 + j] = 1.0
                cols_c, vals_c = layout.block_functional(k, cur)
                asm.add(np.r_[cols_c, cols_p], np.r_[vals_c, -vals_p], 0.0, f"outer[{k}][{i},{j}]")
        _eq_close(asm)

        # ---- objective and nonneg rows
        if not last:
            e = np.zeros((dim, dim))
            e[1 + STATE_DIM:, 1 + STATE_DIM:] = np.eye(CONTROL_DIM)
            cols, vals = layout.block_functional(k, e)
            c[cols] += vals
            if lb is not None and lb > 0:
                # s = tr(L_uu) - b_l^2 >= 0
                asm.add(cols, -vals, -lb * lb, f"lower[{k}]")
            if ub is not None and spec.lifted_upper_bound:
                # s = b_u^2 - tr(L_uu) >= 0, the lift of |u|^2 <= b_u^2
                asm.add(cols, vals, ub * ub, f"upper_lifted[{k}]")
        else:
            g = np.zeros((dim, dim))
            g[POS, POS] = weight
            g[POS, 0] = weight @ d_s
            g[0, POS] = weight @ d_s
            cols, vals = layout.block_functional(k, g)
            if not contingency:
                # s = g - p >= 0
                asm.add(cols, -vals, const - p, "poc")
            else:
                ti = layout.extra_index(0)
                # t - (g - p) >= 0 and t + (g - p) >= 0
                asm.add(np.r_[ti, cols], np.r_[-1.0, vals], p - const, "penalty_hi")
                asm.add(np.r_[ti, cols], np.r_[-1.0, -vals], const - p, "penalty_lo")
                c[ti] = spec.penalty_weight
        asm.close("nonneg")

        # ---- control norm bound
        if not last and ub is not None:
            e = np.zeros((dim, dim))
            e[0, 0] = 1.0
            cols, vals = layout.block_functional(k, e)
            asm.add(cols, -ub * vals, 0.0, f"soc_head[{k}]")
            for i in range(CONTROL_DIM):
                e = np.zeros((dim, dim))
                e[1 + STATE_DIM + i, 0] = 1.0
                cols, vals = layout.block_functional(k, e)
                asm.add(cols, -vals, 0.0, f"soc[{k}][{i}]")
            asm.close("soc")

        # ---- PSD block
        sl = layout.block_slice(k)
        asm.psd_block(np.arange(sl.start, sl.stop), dim)

    return asm.build(c), layout


def moment_blocks_from_rollout(spec, controls, delta_states=None):
    """Rank-one moment matrices (scaled units) of a control sequence's linear rollout."""
    controls = np.asarray(controls, dtype=float).reshape(-1, CONTROL_DIM)
    if delta_states is None:
        delta_states = spec.model.rollout(spec.initial_delta_state, controls)
    zs = spec.scaling.z_scale(True)
    zt = spec.scaling.z_scale(False)
    blocks = []
    for k in range(spec.n_knots):
        if k < spec.n_knots - 1:
            z = np.concatenate([[1.0], delta_states[k], controls[k]]) * zs
        else:
            z = np.concatenate([[1.0], delta_states[k]]) * zt
        blocks.append(np.outer(z, z))
    return blocks


def terminal_mahalanobis(spec, delta_n):
    """Mahalanobis distance squared of the terminal point for a terminal deviation (SI)."""
    geo = spec.geometry
    pos = spec.model.reference.knots[-1].position + np.asarray(delta_n)[:3]
    return poc_estimate(geo.bplane_point(pos), geo.combined_cov, geo.hard_body_radius)


def extract_solution(solution: ConicSolution, layout: MomentLayout, spec: PlannerSpec):
    """Rank-one extraction, tightness certificate and de-scaling to SI."""
    if not solution.optimal:
        raise NotOptimal(solution.status)
    n = layout.n_knots
    x = np.asarray(solution.primal)
    zs = spec.scaling.z_scale(True)
    zt = spec.scaling.z_scale(False)
    ratios, repeated = [], []
    controls = np.zeros((n - 1, CONTROL_DIM))
    states = np.zeros((n, STATE_DIM))
    for k in range(n):
        r1 = extract_rank_one(layout.block(x, k))
        ratios.append(r1.ratio)
        if r1.repeated:
            repeated.append(k)
        if k < n - 1:
            z = r1.vector / zs
            controls[k] = z[1 + STATE_DIM:]
        else:
            z = r1.vector / zt
        states[k] = z[1:1 + STATE_DIM]
    min_ratio = float(min(ratios))
    certified = min_ratio >= TIGHT_RATIO and not repeated
    report = TightnessReport(tuple(ratios), min_ratio, bool(certified), tuple(repeated))

    su = spec.scaling.control
    objective = 0.0
    for k in range(n - 1):
        m = layout.block(x, k)
        objective += float(np.trace(m[1 + STATE_DIM:, 1 + STATE_DIM:]))
    objective /= su ** 2

    weight, d_s, const = terminal_quadratic(spec)
    mn = layout.block(x, n - 1)
    g = const + 2.0 * d_s @ weight @ mn[POS, 0] + float(np.sum(weight * mn[POS, POS]))
    rollout = spec.model.rollout(spec.initial_delta_state, controls)
    achieved = terminal_mahalanobis(spec, rollout[-1])
    return ManeuverPlan(controls, states, objective, report, achieved,
                        float(solution.primal_obj), float(g - spec.geometry.threshold), rollout)
