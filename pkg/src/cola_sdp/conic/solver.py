"""
Primal-dual interior-point solver for :class:`ConicProblem`.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector. Equality (zero-cone) rows are kept as ``A_eq x = b_eq``;
the remaining rows become ``G x + s = h`` with ``s`` in the cone product.

Each Newton system is reduced to::

    [ H    A_eq^T ] [dx]   [rx]
    [ A_eq   0    ] [dy] = [ry],      H = G^T (W^T W)^{-1} G

and solved by block elimination. Columns of ``G`` split into independent
groups (no row or cone touches two groups), which makes ``H`` block
diagonal; for the moment-matrix relaxations every knot is its own group, so
the cost per iteration is dominated by the equality Schur complement.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..errors import ShapeMismatch
from .cones import ConeSet
from .problem import ZERO, ConicProblem, ConicSolution, SolverSettings, Status

log = logging.getLogger(__name__)

_REG = 1e-13


class _Structure:
    """Row split and column grouping computed once per solve."""

    def __init__(self, problem: ConicProblem):
        eq_rows, cone_rows, cones = [], [], []
        for cone, sl in problem.cone_slices():
            rows = np.arange(sl.start, sl.stop)
            if cone.kind == ZERO:
                eq_rows.append(rows)
            else:
                cone_rows.append(rows)
                cones.append(cone)
        self.eq_rows = np.concatenate(eq_rows) if eq_rows else np.zeros(0, int)
        self.cone_rows = np.concatenate(cone_rows) if cone_rows else np.zeros(0, int)
        self.coneset = ConeSet(cones)
        a = problem.a
        self.a_eq = a[self.eq_rows].tocsr()
        self.b_eq = problem.b[self.eq_rows]
        self.g = a[self.cone_rows].tocsr()
        self.h = problem.b[self.cone_rows]
        self.c = problem.c
        n = problem.n
        self.n = n
        self.p = self.eq_rows.size

        # group columns: link columns sharing a cone block
        gcoo = self.g.tocoo()
        cone_of_row = np.empty(self.coneset.rows, dtype=int)
        for idx, (_, _, off, rows) in enumerate(self.coneset.cones):
            cone_of_row[off:off + rows] = idx
        ncone = len(self.coneset.cones)
        # bipartite graph columns <-> cones
        graph = sp.coo_matrix(
            (np.ones(gcoo.nnz), (gcoo.col, n + cone_of_row[gcoo.row])),
            shape=(n + ncone, n + ncone),
        )
        _, labels = connected_components(graph, directed=False)
        col_labels = labels[:n]
        cone_labels = labels[n:]
        self.groups = []
        for lab in np.unique(col_labels):
            cols = np.flatnonzero(col_labels == lab)
            cone_ids = [k for k in range(ncone) if cone_labels[k] == lab]
            self.groups.append(_Group(self, cols, cone_ids))


class _Group:
    def __init__(self, st, cols, cone_ids):
        self.cols = cols
        self.cone_ids = cone_ids
        rows = [np.arange(st.coneset.cones[k][2], st.coneset.cones[k][2] + st.coneset.cones[k][3])
                for k in cone_ids]
        self.rows = np.concatenate(rows) if rows else np.zeros(0, int)
        self.g_dense = st.g[self.rows][:, cols].toarray()
        a_sub = st.a_eq[:, cols].tocsr()
        self.eq_rows = np.flatnonzero(np.diff(a_sub.indptr))
        self.a_dense = a_sub[self.eq_rows].toarray()


class _Kkt:
    """Factorization of the reduced Newton system for one NT scaling."""

    def __init__(self, st: _Structure, scaling):
        self.st = st
        self.scaling = scaling
        blocks = scaling.inv_weight_blocks()
        self.blocks = blocks
        self.chol = []
        s_mat = np.zeros((st.p, st.p))
        for grp in st.groups:
            if grp.rows.size:
                d = la.block_diag(*[blocks[k] for k in grp.cone_ids])
                hmat = grp.g_dense.T @ d @ grp.g_dense
            else:
                hmat = np.zeros((grp.cols.size, grp.cols.size))
            _regularize(hmat)
            lower = _cholesky(hmat)
            self.chol.append(lower)
            if grp.eq_rows.size:
                y = la.solve_triangular(lower, grp.a_dense.T, lower=True, check_finite=False)
                s_mat[np.ix_(grp.eq_rows, grp.eq_rows)] += y.T @ y
        if st.p:
            _regularize(s_mat)
            self.s_chol = _cholesky(s_mat)

    def _hsolve(self, t):
        out = np.empty_like(t)
        for grp, lower in zip(self.st.groups, self.chol):
            out[grp.cols] = la.cho_solve((lower, True), t[grp.cols], check_finite=False)
        return out

    def _solve_once(self, r1, r2, r3s):
        st, w = self.st, self.scaling
        t = r1 + st.g.T @ w.apply_winv(r3s)
        ht = self._hsolve(t)
        if st.p:
            dy = la.cho_solve((self.s_chol, True), st.a_eq @ ht - r2, check_finite=False)
            dx = self._hsolve(t - st.a_eq.T @ dy)
        else:
            dy = np.zeros(0)
            dx = ht
        dz = w.apply_winv(w.apply_winv_t(st.g @ dx) - r3s)
        return dx, dy, dz

    def solve(self, r1, r2, r3s, refine=10):
        """Solve [[0, A^T, G^T], [A, 0, 0], [G, 0, -W^T W]] (dx, dy, dz) = (r1, r2, W^T r3s).

        The third block row is taken in scaled form, W^{-T} G dx - W dz = r3s,
        which keeps the refinement residual free of the large W^T W terms.
        Refinement stops once the residual no longer shrinks.
        """
        st, w = self.st, self.scaling

        def residual(dx, dy, dz):
            e1 = r1 - (st.a_eq.T @ dy + st.g.T @ dz)
            e2 = r2 - st.a_eq @ dx
            e3 = r3s - (w.apply_winv_t(st.g @ dx) - w.apply_w(dz))
            return e1, e2, e3, float(np.sqrt(e1 @ e1 + e2 @ e2 + e3 @ e3))

        dx, dy, dz = self._solve_once(r1, r2, r3s)
        e1, e2, e3, err = residual(dx, dy, dz)
        for _ in range(refine):
            cx, cy, cz = self._solve_once(e1, e2, e3)
            nx, ny, nz = dx + cx, dy + cy, dz + cz
            f1, f2, f3, new_err = residual(nx, ny, nz)
            if not new_err < err:
                break
            dx, dy, dz, e1, e2, e3 = nx, ny, nz, f1, f2, f3
            if new_err > 0.5 * err:
                err = new_err
                break
            err = new_err
        return dx, dy, dz


def _regularize(mat):
    """Shift each diagonal entry relative to itself; a shift relative to the
    largest entry swamps the small ones when the NT weights spread widely."""
    if mat.size:
        d = np.abs(np.diag(mat))
        floor = _REG * max(1.0, float(d.max()))
        mat[np.diag_indices_from(mat)] += _REG * d + floor * 1e-6


def _cholesky(mat):
    mat = 0.5 * (mat + mat.T)
    shift = 0.0
    for _ in range(30):
        try:
            return la.cholesky(mat + shift * np.eye(mat.shape[0]), lower=True, check_finite=False)
        except la.LinAlgError:
            base = max(1e-300, float(np.max(np.abs(np.diag(mat)))))
            shift = base * 1e-12 if shift == 0.0 else shift * 100.0
    raise np.linalg.LinAlgError("matrix could not be factorized")


def residuals(problem, solution):
    """Relative primal residual, dual residual and duality gap.

    primal_res = |A x + s - b| / (1 + |b|)
    dual_res   = |A^T y + c| / (1 + |c|)
    gap        = |c^T x + b^T y| / (1 + |c^T x|)
    """
    x = np.asarray(solution.primal, dtype=float)
    y = np.asarray(solution.dual, dtype=float)
    s = np.asarray(solution.slack, dtype=float)
    if x.shape != (problem.n,) or y.shape != (problem.m,) or s.shape != (problem.m,):
        raise ShapeMismatch("solution vectors do not match the problem dimensions")
    pres = np.linalg.norm(problem.a @ x + s - problem.b) / (1.0 + np.linalg.norm(problem.b))
    dres = np.linalg.norm(problem.a.T @ y + problem.c) / (1.0 + np.linalg.norm(problem.c))
    cx = float(problem.c @ x)
    gap = abs(cx + float(problem.b @ y)) / (1.0 + abs(cx))
    return float(pres), float(dres), float(gap)


def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve ``problem``; failures are reported through ``status``."""
    settings = settings or SolverSettings()
    st = _Structure(problem)
    try:
        return _solve(problem, st, settings)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        log.debug("numerical failure: %s", exc)
        n, m = problem.n, problem.m
        nan = float("nan")
        return ConicSolution(np.full(n, nan), np.full(m, nan), np.full(m, nan),
                             Status.NUMERICAL_FAILURE, nan, nan, nan, 0)


def _assemble(problem, st, x, y_eq, z, s):
    y = np.zeros(problem.m)
    y[st.eq_rows] = y_eq
    y[st.cone_rows] = z
    slack = np.zeros(problem.m)
    slack[st.cone_rows] = s
    return x, y, slack


def _solve(problem, st, settings):
    cs = st.coneset
    c, h, b = st.c, st.h, st.b_eq
    a_eq, g = st.a_eq, st.g
    n, p = st.n, st.p
    degree = cs.degree

    x = np.zeros(n)
    y = np.zeros(p)
    s = cs.unit()
    z = cs.unit()
    tau, kappa = 1.0, 1.0
    e = cs.unit()

    norm_b = np.linalg.norm(problem.b)
    norm_c = np.linalg.norm(c)
    resx0 = max(1.0, norm_c)
    resy0 = max(1.0, np.linalg.norm(np.concatenate([b, h])))

    status = Status.MAX_ITERATIONS
    scaling = None
    it = 0
    for it in range(settings.max_iterations + 1):
        rx = a_eq.T @ y + g.T @ z + c * tau
        ry = a_eq @ x - b * tau
        rz = g @ x + s - h * tau
        cx, by_hz = float(c @ x), float(b @ y + h @ z)
        rt = cx + by_hz + kappa
        gap_sz = float(s @ z)
        mu = (gap_sz + tau * kappa) / (degree + 1)

        # convergence tests on the de-homogenized point
        pcost = cx / tau
        dcost = -by_hz / tau
        pres = np.sqrt(ry @ ry + rz @ rz) / tau / (1.0 + norm_b)
        dres = np.linalg.norm(rx) / tau / (1.0 + norm_c)
        relgap = abs(pcost - dcost) / (1.0 + abs(pcost))
        compl = gap_sz / tau ** 2 / (1.0 + abs(pcost))
        if settings.verbose:
            log.info("it %2d pcost % .8e dcost % .8e pres %.1e dres %.1e gap %.1e tau %.1e kap %.1e",
                     it, pcost, dcost, pres, dres, relgap, tau, kappa)
        # objective gap as reported by residuals(); complementarity gets slack
        # because it is the slower of the two to settle on faces without interior
        if (pres <= settings.feas_tol and dres <= settings.feas_tol
                and relgap <= settings.rel_gap_tol and compl <= 10.0 * settings.rel_gap_tol):
            status = Status.OPTIMAL
            break
        if by_hz < 0:
            pinf = np.linalg.norm(a_eq.T @ y + g.T @ z) / resx0 / (-by_hz)
            if pinf <= settings.feas_tol:
                status = Status.PRIMAL_INFEASIBLE
                break
        if cx < 0:
            dinf = np.sqrt(np.sum((a_eq @ x) ** 2) + np.sum((g @ x + s) ** 2)) / resy0 / (-cx)
            if dinf <= settings.feas_tol:
                status = Status.DUAL_INFEASIBLE
                break
        if it == settings.max_iterations:
            break

        if scaling is None:
            scaling = cs.scaling(s, z)
        lam = scaling.lam
        kkt = _Kkt(st, scaling)
        x1, y1, z1 = kkt.solve(-c, b, scaling.apply_winv_t(h))
        denom_base = float(c @ x1 + b @ y1 + h @ z1)

        def direction(sigma, corr_s, corr_t):
            eta = 1.0 - sigma
            rhs5 = -cs.product(lam, lam) + sigma * mu * e - corr_s
            rhs6 = -tau * kappa + sigma * mu - corr_t
            lam_inv_rhs5 = scaling.inv_product(rhs5)
            r1 = -eta * rx
            r2 = -eta * ry
            r3 = -eta * scaling.apply_winv_t(rz) - lam_inv_rhs5
            r4 = -eta * rt - rhs6 / tau
            x2, y2, z2 = kkt.solve(r1, r2, r3)
            dtau = (r4 - float(c @ x2 + b @ y2 + h @ z2)) / (denom_base - kappa / tau)
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            dz_s = scaling.apply_w(dz)
            # take ds from the linearized primal rows so residuals shrink exactly
            ds = -eta * rz + dtau * h - g @ dx
            ds_s = scaling.apply_winv_t(ds)
            dkappa = (rhs6 - kappa * dtau) / tau
            return dx, dy, dz, ds, ds_s, dz_s, dtau, dkappa

        def max_step(ds_s, dz_s, dtau, dkappa):
            alpha = min(cs.max_step(lam, ds_s, scaling.lam_eigs),
                        cs.max_step(lam, dz_s, scaling.lam_eigs))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return alpha

        # predictor
        zero = np.zeros_like(lam)
        _, _, _, _, ds_a, dz_a, dtau_a, dkap_a = direction(0.0, zero, 0.0)
        alpha_aff = min(1.0, max_step(ds_a, dz_a, dtau_a, dkap_a))
        sigma = (1.0 - alpha_aff) ** 3

        # corrector
        dx, dy, dz, ds, ds_s, dz_s, dtau, dkappa = direction(
            sigma, cs.product(ds_a, dz_a), dtau_a * dkap_a)
        alpha = min(1.0, settings.step_fraction * max_step(ds_s, dz_s, dtau, dkappa))
        log.debug("alpha_aff %.3e sigma %.3e alpha %.3e", alpha_aff, sigma, alpha)

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            raise FloatingPointError("non-finite iterate")
        scaling = scaling.updated(s, z, ds_s, dz_s, alpha)

    if status == Status.PRIMAL_INFEASIBLE:
        scale = -float(b @ y + h @ z)
        xo, yo, so = _assemble(problem, st, np.full(n, np.nan), y / scale, z / scale, np.full(cs.rows, np.nan))
        return ConicSolution(xo, yo, so, status, np.inf, -1.0, np.nan, it)
    if status == Status.DUAL_INFEASIBLE:
        scale = -float(c @ x)
        xo, yo, so = _assemble(problem, st, x / scale, np.full(p, np.nan), np.full(cs.rows, np.nan), s / scale)
        return ConicSolution(xo, yo, so, status, -1.0, -np.inf, np.nan, it)

    xo, yo, so = _assemble(problem, st, x / tau, y / tau, z / tau, s / tau)
    pcost = float(problem.c @ xo)
    dcost = -float(problem.b @ yo)
    sol = ConicSolution(xo, yo, so, status, pcost, dcost, abs(pcost - dcost), it)
    pres, dres, gap = residuals(problem, sol)
    return ConicSolution(xo, yo, so, status, pcost, dcost, gap, it, pres, dres)
