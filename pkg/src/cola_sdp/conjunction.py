"""
Encounter-plane geometry and the short-term probability of collision.

With relative position and velocity (primary minus secondary) at TCA the
encounter basis is::

    b_y = dv / |dv|,   b_z = (dr x dv) / |dr x dv|,   b_x = b_y x b_z

and the projector onto the collision plane keeps the b_x and b_z rows. For a
constant Gaussian density over the collision disk of radius R the PoC is::

    Pc = R^2 / (2 sqrt(det C)) * exp(-r_b^T C^{-1} r_b / 2)

so requiring Pc <= Pc* is the same as r_b^T C^{-1} r_b >= p with
p = ln(R^4 / (4 Pc*^2 det C)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .dynamics import StateVector
from .errors import DegenerateEncounter, SingularProjectedCovariance, TargetUnreachable

DEFAULT_HARD_BODY_RADIUS = 10.0  # m


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BPlaneFrame:
    b_x: np.ndarray
    b_y: np.ndarray
    b_z: np.ndarray

    def __post_init__(self):
        for name in ("b_x", "b_y", "b_z"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def projector(self):
        """2x3 map from ECI onto the (b_x, b_z) collision-plane coordinates."""
        return np.vstack([self.b_x, self.b_z])

    @property
    def rotation(self):
        """Rows b_x, b_y, b_z: ECI to encounter frame."""
        return np.vstack([self.b_x, self.b_y, self.b_z])


@dataclass(frozen=True)
class PocEstimate:
    mahalanobis_sq: float
    pc_closed_form: float
    pc_quadrature: float | None = None


@dataclass(frozen=True)
class ConjunctionGeometry:
    frame: BPlaneFrame
    combined_cov: np.ndarray
    threshold: float
    hard_body_radius: float
    secondary_state: StateVector
    target_pc: float

    def __post_init__(self):
        object.__setattr__(self, "combined_cov", _frozen(self.combined_cov))

    @property
    def projector(self):
        return self.frame.projector

    def position_weight(self):
        """3x3 matrix P = R~^T C^{-1} R~ so that r_b^T C^{-1} r_b = d^T P d (m^-2)."""
        r = self.frame.projector
        return r.T @ np.linalg.solve(self.combined_cov, r)

    def bplane_point(self, primary_position):
        """Collision-plane coordinates (m) of the primary relative to the secondary."""
        d = np.asarray(primary_position, dtype=float) - self.secondary_state.position
        return self.frame.projector @ d

    def estimate(self, primary_position, quadrature=False):
        return poc_estimate(self.bplane_point(primary_position), self.combined_cov,
                            self.hard_body_radius, quadrature=quadrature)


def bplane(delta_r, delta_v):
    """Encounter-plane basis from relative position and velocity at TCA."""
    dr = np.asarray(delta_r, dtype=float)
    dv = np.asarray(delta_v, dtype=float)
    vn = np.linalg.norm(dv)
    if vn == 0.0:
        raise DegenerateEncounter("relative velocity vanishes")
    cross = np.cross(dr, dv)
    cn = np.linalg.norm(cross)
    if cn <= 1e-12 * vn * max(np.linalg.norm(dr), 1e-300):
        raise DegenerateEncounter("relative position is parallel to relative velocity")
    b_y = dv / vn
    b_z = cross / cn
    b_x = np.cross(b_y, b_z)
    return BPlaneFrame(b_x, b_y, b_z)


def combined_covariance(c1_eci, c2_eci, frame):
    """R~ (C1 + C2) R~^T."""
    r = frame.projector
    c = r @ (np.asarray(c1_eci, dtype=float) + np.asarray(c2_eci, dtype=float)) @ r.T
    c = 0.5 * (c + c.T)
    if np.linalg.det(c) <= 0.0 or c[0, 0] <= 0.0:
        raise SingularProjectedCovariance("projected covariance is not positive definite")
    return c


def _det(c):
    det = float(np.linalg.det(c))
    if det <= 0.0 or c[0, 0] <= 0.0:
        raise SingularProjectedCovariance("covariance is not positive definite")
    return det


def density_ceiling(r_hbr, c):
    """Largest achievable closed-form Pc, R^2 / (2 sqrt(det C))."""
    return r_hbr ** 2 / (2.0 * math.sqrt(_det(np.asarray(c, dtype=float))))


def poc_threshold(target_pc, r_hbr, c):
    """p = ln(R^4 / (4 Pc^2 det C))."""
    c = np.asarray(c, dtype=float)
    det = _det(c)
    if not target_pc > 0.0:
        raise ValueError("target probability must be positive")
    if target_pc > density_ceiling(r_hbr, c):
        raise TargetUnreachable(
            f"target {target_pc:.3e} exceeds the density ceiling {density_ceiling(r_hbr, c):.3e}")
    return math.log(r_hbr ** 4 / (4.0 * target_pc ** 2 * det))


def _disk_quadrature(center, c, r_hbr):
    cinv = np.linalg.inv(c)
    norm = 1.0 / (2.0 * math.pi * math.sqrt(np.linalg.det(c)))
    cx, cz = center

    def integrand(rho, theta):
        x = cx + rho * math.cos(theta)
        z = cz + rho * math.sin(theta)
        q = cinv[0, 0] * x * x + 2 * cinv[0, 1] * x * z + cinv[1, 1] * z * z
        return norm * math.exp(-0.5 * q) * rho

    val, _ = integrate.dblquad(integrand, 0.0, 2 * math.pi, 0.0, r_hbr,
                               epsabs=0.0, epsrel=1e-10)
    return float(val)


def poc_estimate(delta_r_b, c, r_hbr, quadrature=False):
    """Mahalanobis distance and Pc of a collision-plane point."""
    c = np.asarray(c, dtype=float)
    det = _det(c)
    rb = np.asarray(delta_r_b, dtype=float).reshape(2)
    m2 = float(rb @ np.linalg.solve(c, rb))
    pc = r_hbr ** 2 / (2.0 * math.sqrt(det)) * math.exp(-0.5 * m2)
    pq = _disk_quadrature(rb, c, r_hbr) if quadrature else None
    return PocEstimate(m2, min(pc, 1.0), pq)


def build_geometry(primary_tca, secondary_tca, c1_eci, c2_eci, r_hbr, target_pc):
    """Assemble the frozen encounter description used by the planner."""
    dr = primary_tca.position - secondary_tca.position
    dv = primary_tca.velocity - secondary_tca.velocity
    frame = bplane(dr, dv)
    c = combined_covariance(c1_eci, c2_eci, frame)
    p = poc_threshold(target_pc, r_hbr, c)
    return ConjunctionGeometry(frame, c, p, float(r_hbr), secondary_tca, float(target_pc))
