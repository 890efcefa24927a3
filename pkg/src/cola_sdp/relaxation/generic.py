"""
Shor relaxation of a single-constraint QCQP and rank-one extraction.

For ``min x^T Q x + d^T x  s.t.  x^T A x = b`` lift z = (1, x) to the moment
matrix M = z z^T, keep M[0, 0] = 1 and M PSD and drop rank(M) = 1. The
objective and constraint become linear in M: tr(Q L_xx) + d^T L_x and
tr(A L_xx) = b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..conic import solve
from ..conic.cones import smat, svec_size
from ..errors import LeadingEntryNearZero, NotOptimal
from .assembly import RowAssembler
from .layout import functional

RATIO_CAP = 1e16
TIGHT_RATIO = 1e4
LEADING_ENTRY_MIN = 1e-6
MULTIPLICITY_RTOL = 1e-9


@dataclass(frozen=True)
class RankOne:
    vector: np.ndarray  # z with z[0] == 1
    ratio: float
    repeated: bool  # leading eigenvalue numerically repeated

    @property
    def certified(self):
        return self.ratio >= TIGHT_RATIO and not self.repeated


def eigen_ratio(lam1, lam2):
    """lambda1 / lambda2, capped at 1e16 (and when lambda2 <= 0)."""
    if lam2 <= 0.0:
        return RATIO_CAP
    return float(min(lam1 / lam2, RATIO_CAP))


def extract_rank_one(m):
    """Leading eigenvector of ``m`` scaled so its first entry is +1."""
    m = np.asarray(m, dtype=float)
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    lam1, lam2 = w[-1], (w[-2] if w.size > 1 else 0.0)
    repeated = w.size > 1 and lam2 >= (1.0 - MULTIPLICITY_RTOL) * lam1
    v1 = v[:, -1]
    if repeated:
        # any vector of the top eigenspace will do; take the one closest to e_0
        top = v[:, w >= (1.0 - MULTIPLICITY_RTOL) * lam1]
        v1 = top @ top[0]
        v1 /= np.linalg.norm(v1) if np.linalg.norm(v1) > 0 else 1.0
    if abs(v1[0]) < LEADING_ENTRY_MIN:
        raise LeadingEntryNearZero(f"leading eigenvector entry {v1[0]:.3e}")
    z = v1 / v1[0]
    return RankOne(z, eigen_ratio(lam1, lam2), bool(repeated))


def shor_relax_generic(q, d, a, b):
    """Conic form of the Shor relaxation; variables are svec(M), M of order n + 1."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    d = np.asarray(d, dtype=float).ravel()
    n = q.shape[0]
    if n < 1 or q.shape != (n, n) or a.shape != (n, n) or d.size != n:
        raise ValueError("inconsistent QCQP dimensions")
    order = n + 1
    nv = svec_size(order)
    cols = np.arange(nv)

    obj = np.zeros((order, order))
    obj[1:, 1:] = q
    obj[1:, 0] = 0.5 * d
    obj[0, 1:] = 0.5 * d
    c = functional(obj)

    asm = RowAssembler(nv)
    corner = np.zeros((order, order))
    corner[0, 0] = 1.0
    asm.add(cols, functional(corner), 1.0, "corner")
    quad = np.zeros((order, order))
    quad[1:, 1:] = a
    asm.add(cols, functional(quad), float(b), "constraint")
    asm.close("zero")
    asm.psd_block(cols, order)
    return asm.build(c)


def rank_reduce(m, constraints, objective, tol=1e-9, max_rounds=50):
    """Move along the optimal face until the rank cannot drop further.

    ``constraints`` and ``objective`` are symmetric matrices whose inner
    products with ``m`` must be preserved. With m = V V^T, any symmetric D
    orthogonal to every V^T A_i V keeps those values along V (I + t D) V^T;
    stepping to the first zero eigenvalue of I + t D lowers the rank by one.
    """
    m = 0.5 * (np.asarray(m, dtype=float) + np.asarray(m, dtype=float).T)
    mats = list(constraints) + [objective]
    for _ in range(max_rounds):
        w, v = np.linalg.eigh(m)
        keep = w > tol * max(w[-1], 1.0)
        r = int(np.count_nonzero(keep))
        if r <= 1:
            break
        vf = v[:, keep] * np.sqrt(w[keep])
        iu = np.triu_indices(r)
        rows = []
        for a in mats:
            t = vf.T @ a @ vf
            coef = t[iu] * np.where(iu[0] == iu[1], 1.0, 2.0)
            rows.append(coef)
        rows = np.array(rows)
        _, sv, vt = np.linalg.svd(rows)
        rank = int(np.count_nonzero(sv > 1e-10 * max(sv[0], 1.0)))
        if rank >= vt.shape[0]:
            break
        dvec = vt[rank]
        d = np.zeros((r, r))
        d[iu] = dvec
        d = d + d.T - np.diag(np.diag(d))
        ev = np.linalg.eigvalsh(d)
        step = -1.0 / ev[0] if abs(ev[0]) >= abs(ev[-1]) else -1.0 / ev[-1]
        core = np.eye(r) + step * d
        m = vf @ core @ vf.T
        m = 0.5 * (m + m.T)
    return m


@dataclass(frozen=True)
class ShorResult:
    value: float  # relaxation optimum
    moment: np.ndarray
    x: np.ndarray  # extracted candidate
    ratio: float
    certified: bool
    status: object


def solve_shor(q, d, a, b, settings=None):
    """Solve the relaxation and extract a rank-one candidate."""
    prob = shor_relax_generic(q, d, a, b)
    sol = solve(prob, settings)
    if not sol.optimal:
        raise NotOptimal(sol.status)
    m = smat(sol.primal)
    order = m.shape[0]
    corner = np.zeros((order, order))
    corner[0, 0] = 1.0
    quad = np.zeros((order, order))
    quad[1:, 1:] = np.atleast_2d(a)
    obj = np.zeros((order, order))
    obj[1:, 1:] = np.atleast_2d(q)
    obj[1:, 0] = obj[0, 1:] = 0.5 * np.asarray(d, dtype=float).ravel()
    r1 = extract_rank_one(m)
    if not r1.certified:
        m = rank_reduce(m, [corner, quad], obj)
        r1 = extract_rank_one(m)
    return ShorResult(sol.primal_obj, m, r1.vector[1:], r1.ratio, r1.certified, sol.status)
