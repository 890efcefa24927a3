"""
Orbital dynamics: force model, propagation, reference discretization and
finite-difference linearization of the discrete step map.

Force model is two-body + J2 + optional exponential-atmosphere drag. All
quantities are SI (m, s, kg) in an Earth-centred inertial frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from . import kernels
from .errors import IntegrationFailure, SubOrbitalState

# Continuous-time reference epoch for :class:`Epoch` (J2000 noon, no leap seconds).
REFERENCE_DATETIME = datetime(2000, 1, 1, 12, 0, 0, tzinfo=timezone.utc)

RTOL = 1e-12
ATOL = 1e-9
MAX_STEPS = 2_000_000

FD_STEP_POSITION = 1.0  # m
FD_STEP_VELOCITY = 1e-3  # m/s
FD_STEP_CONTROL = 1e-6  # m/s^2


@dataclass(frozen=True, order=True)
class Epoch:
    """Instant on a continuous (TAI-like) time scale, seconds after J2000 noon."""

    seconds_since_reference: float

    def __add__(self, seconds):
        return Epoch(self.seconds_since_reference + float(seconds))

    def __sub__(self, other):
        if isinstance(other, Epoch):
            return self.seconds_since_reference - other.seconds_since_reference
        return Epoch(self.seconds_since_reference - float(other))

    @classmethod
    def from_iso(cls, text):
        """Parse ``YYYY-MM-DDThh:mm:ss[.fff]`` or ``YYYY-DDDThh:mm:ss[.fff]``."""
        text = text.strip().rstrip("Z")
        date_part, _, time_part = text.partition("T")
        if date_part.count("-") == 1:
            year, doy = date_part.split("-")
            base = datetime(int(year), 1, 1, tzinfo=timezone.utc) + timedelta(days=int(doy) - 1)
        else:
            y, m, d = date_part.split("-")
            base = datetime(int(y), int(m), int(d), tzinfo=timezone.utc)
        seconds = 0.0
        if time_part:
            hh, mm, ss = time_part.split(":")
            seconds = int(hh) * 3600 + int(mm) * 60 + float(ss)
        whole = (base - REFERENCE_DATETIME).days * 86400 + (base - REFERENCE_DATETIME).seconds
        return cls(whole + seconds)

    def to_iso(self, digits=6):
        whole = math.floor(self.seconds_since_reference)
        ticks = round((self.seconds_since_reference - whole) * 10 ** digits)
        if ticks == 10 ** digits:
            whole, ticks = whole + 1, 0
        text = (REFERENCE_DATETIME + timedelta(seconds=whole)).strftime("%Y-%m-%dT%H:%M:%S")
        return text + (f".{ticks:0{digits}d}" if digits > 0 else "")


def _frozen(values, size):
    arr = np.array(values, dtype=float).reshape(size)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateVector:
    epoch: Epoch
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position, 3))
        object.__setattr__(self, "velocity", _frozen(self.velocity, 3))
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("state vector entries must be finite")

    @property
    def vector(self):
        """Position and velocity stacked into a fresh 6-vector."""
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, epoch, y):
        return cls(epoch, y[:3], y[3:6])


@dataclass(frozen=True)
class ForceModelConfig:
    mu: float = 3.986004418e14
    j2_enabled: bool = True
    j2_coefficient: float = 1.08262668e-3
    earth_radius: float = 6378137.0
    drag_enabled: bool = False
    drag_ballistic_coefficient: float = 0.022  # Cd * A / m, m^2/kg
    drag_reference_density: float = 1.0e-13  # kg/m^3 at the reference altitude
    drag_scale_height: float = 63_000.0
    drag_reference_altitude: float = 550_000.0
    earth_rotation_rate: float = 7.292115e-5  # rad/s, co-rotating atmosphere

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.drag_enabled and self.drag_scale_height <= 0:
            raise ValueError("drag scale height must be positive")

    def params(self):
        """Flat parameter array consumed by :mod:`cola_sdp.kernels`."""
        p = np.zeros(kernels.N_PARAMS)
        p[kernels.PARAM_MU] = self.mu
        p[kernels.PARAM_J2] = self.j2_coefficient if self.j2_enabled else 0.0
        p[kernels.PARAM_RE] = self.earth_radius
        p[kernels.PARAM_DRAG] = 1.0 if self.drag_enabled else 0.0
        p[kernels.PARAM_BC] = self.drag_ballistic_coefficient
        p[kernels.PARAM_RHO0] = self.drag_reference_density
        p[kernels.PARAM_SCALE_H] = self.drag_scale_height
        p[kernels.PARAM_H_REF] = self.drag_reference_altitude
        p[kernels.PARAM_OMEGA] = self.earth_rotation_rate
        return p

    @classmethod
    def two_body(cls, **kw):
        return cls(j2_enabled=False, drag_enabled=False, **kw)


@dataclass(frozen=True)
class Trajectory:
    knots: tuple
    step_seconds: float

    def __post_init__(self):
        object.__setattr__(self, "knots", tuple(self.knots))
        if self.step_seconds <= 0:
            raise ValueError("step_seconds must be positive")

    def __len__(self):
        return len(self.knots)

    def states(self):
        """(N, 6) array of knot states."""
        return np.array([k.vector for k in self.knots])


@dataclass(frozen=True)
class LinearModel:
    """Per-interval Jacobians of the discrete step map about a reference."""

    a_mats: np.ndarray  # (N-1, 6, 6)
    b_mats: np.ndarray  # (N-1, 6, 3), state change per unit acceleration
    reference: Trajectory
    substeps: tuple = field(default=())

    @property
    def n_knots(self):
        return len(self.reference)

    def rollout(self, delta_x1, controls):
        """Linear error-state rollout; returns (N, 6) delta states."""
        controls = np.asarray(controls, dtype=float).reshape(-1, 3)
        dx = np.zeros((self.n_knots, 6))
        dx[0] = delta_x1
        for k in range(self.n_knots - 1):
            dx[k + 1] = self.a_mats[k] @ dx[k] + self.b_mats[k] @ controls[k]
        return dx


def _check_radius(r, config):
    if np.linalg.norm(r) < config.earth_radius:
        raise SubOrbitalState(f"|r| = {np.linalg.norm(r):.1f} m is below the Earth radius")


def accel_model(state, config):
    """Total gravitational (+drag) acceleration in ECI, m/s^2."""
    _check_radius(state.position, config)
    return np.asarray(kernels.accel(state.position.copy(), state.velocity.copy(), config.params()))


def _integrate(y0, duration, config, control, rtol, atol):
    u = np.zeros(3) if control is None else np.asarray(control, dtype=float).reshape(3)
    y, steps, status = kernels.propagate_adaptive(
        np.asarray(y0, dtype=float), float(duration), config.params(), u, rtol, atol, 30.0, MAX_STEPS
    )
    if status == kernels.STATUS_SUBORBITAL:
        raise SubOrbitalState("trajectory dropped below the Earth radius")
    if status != kernels.STATUS_OK:
        raise IntegrationFailure(f"integrator status {status} after {steps} steps")
    return np.asarray(y), int(steps)


def propagate(state, duration, config, control=None, rtol=RTOL, atol=ATOL):
    """Integrate x' = f(x) + u over ``duration`` seconds with u held constant.

    Uses an embedded Dormand-Prince 5(4) pair with adaptive steps.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative (use backpropagate)")
    _check_radius(state.position, config)
    if duration == 0:
        return state
    y, _ = _integrate(state.vector, duration, config, control, rtol, atol)
    return StateVector.from_vector(state.epoch + duration, y)


def backpropagate(state, duration, config, rtol=RTOL, atol=ATOL):
    """Uncontrolled propagation ``duration`` seconds into the past."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    _check_radius(state.position, config)
    if duration == 0:
        return state
    y, _ = _integrate(state.vector, -duration, config, None, rtol, atol)
    return StateVector.from_vector(state.epoch - duration, y)


def discretize_reference(initial, horizon, n_knots, config):
    """Zero-control reference trajectory sampled at ``n_knots`` uniform knots."""
    if n_knots < 2:
        raise ValueError("n_knots must be >= 2")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    step = horizon / (n_knots - 1)
    knots = [initial]
    current = initial
    for k in range(1, n_knots):
        nxt = propagate(current, step, config)
        # pin epochs to the uniform grid so spacing is exact
        current = StateVector(initial.epoch + k * step, nxt.position, nxt.velocity)
        knots.append(current)
    return Trajectory(tuple(knots), step)


def substeps_for(state, step, config):
    """Fixed substep count for the discrete step map over one knot interval.

    Twice the adaptive step count needed at the default tolerances, so the
    fixed-step map is at least as accurate as the reference propagation.
    """
    _, steps = _integrate(state.vector, step, config, None, RTOL, ATOL)
    return max(8, 2 * steps)


def step_map(y, u, step, n_sub, config):
    """Discrete dynamics f_d(x, u) over one interval (fixed-step DP5, ZOH control)."""
    return np.asarray(
        kernels.propagate_fixed(
            np.asarray(y, dtype=float), float(step), int(n_sub), config.params(),
            np.asarray(u, dtype=float).reshape(3),
        )
    )


def _jacobians(y, step, n_sub, config, hx, hu):
    a = np.empty((6, 6))
    b = np.empty((6, 3))
    zero_u = np.zeros(3)
    for j in range(6):
        e = np.zeros(6)
        e[j] = hx[j]
        a[:, j] = (step_map(y + e, zero_u, step, n_sub, config)
                   - step_map(y - e, zero_u, step, n_sub, config)) / (2 * hx[j])
    for j in range(3):
        e = np.zeros(3)
        e[j] = hu
        b[:, j] = (step_map(y, e, step, n_sub, config)
                   - step_map(y, -e, step, n_sub, config)) / (2 * hu)
    return a, b


def linearize(traj, config, position_step=FD_STEP_POSITION, velocity_step=FD_STEP_VELOCITY,
              control_step=FD_STEP_CONTROL):
    """Central finite-difference Jacobians (A_k, B_k) of the step map along ``traj``."""
    if len(traj) < 2:
        raise ValueError("trajectory needs at least two knots")
    hx = np.array([position_step] * 3 + [velocity_step] * 3)
    a_mats, b_mats, subs = [], [], []
    for knot in traj.knots[:-1]:
        n_sub = substeps_for(knot, traj.step_seconds, config)
        a, b = _jacobians(knot.vector, traj.step_seconds, n_sub, config, hx, control_step)
        a_mats.append(a)
        b_mats.append(b)
        subs.append(n_sub)
    return LinearModel(np.array(a_mats), np.array(b_mats), traj, tuple(subs))


def propagate_controls(initial, controls, step, config):
    """Nonlinear propagation with zero-order-hold controls; returns all knot states."""
    states = [initial]
    current = initial
    for u in np.asarray(controls, dtype=float).reshape(-1, 3):
        current = propagate(current, step, config, control=u)
        states.append(current)
    return states


def specific_energy(state, mu):
    return 0.5 * state.velocity @ state.velocity - mu / np.linalg.norm(state.position)


def angular_momentum(state):
    return np.cross(state.position, state.velocity)


def orbital_period(state, mu):
    """Keplerian period from the osculating semi-major axis."""
    energy = specific_energy(state, mu)
    if energy >= 0:
        raise ValueError("state is not on a bound orbit")
    a = -mu / (2 * energy)
    return 2 * math.pi * math.sqrt(a ** 3 / mu)
