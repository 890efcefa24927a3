"""
Cone algebra for the interior-point method: symmetric vectorization,
Jordan products, Nesterov-Todd scalings and step-to-boundary rules for the
nonnegative orthant, second-order cones and PSD cones.
"""

from __future__ import annotations

import math

import numpy as np

from .. import kernels
from .problem import NONNEG, PSD, SOC

SQRT2 = math.sqrt(2.0)


def svec_size(order):
    return order * (order + 1) // 2


def order_from_svec_size(size):
    order = int(round((math.sqrt(8 * size + 1) - 1) / 2))
    if svec_size(order) != size:
        raise ValueError(f"{size} is not a triangular number")
    return order


_INDEX_CACHE = {}


def svec_indices(order):
    """(rows, cols, weights) of the svec layout: lower triangle, column-major."""
    if order not in _INDEX_CACHE:
        rows, cols = kernels._svec_indices(order)
        w = np.where(rows == cols, 1.0, SQRT2)
        _INDEX_CACHE[order] = (rows, cols, w)
    return _INDEX_CACHE[order]


def svec(mat):
    mat = np.asarray(mat, dtype=float)
    i, j, w = svec_indices(mat.shape[0])
    return w * mat[i, j]


def smat(vec):
    vec = np.asarray(vec, dtype=float)
    order = order_from_svec_size(vec.size)
    i, j, w = svec_indices(order)
    out = np.zeros((order, order))
    out[i, j] = vec / w
    out[j, i] = vec / w
    return out


def svec_position(order, i, j):
    """Index of entry (i, j) of an order-``order`` matrix inside its svec."""
    if i < j:
        i, j = j, i
    # columns 0..j-1 hold order, order-1, ... entries
    return j * order - j * (j - 1) // 2 + (i - j)


def entry_coefficient(i, j):
    """Factor f with M[i, j] = f * svec(M)[svec_position(i, j)]."""
    return 1.0 if i == j else 1.0 / SQRT2


# ---------------------------------------------------------------------------


class ConeSet:
    """The non-equality cones of a problem, laid out over one row vector."""

    def __init__(self, cones):
        self.cones = []
        offset = 0
        for cone in cones:
            self.cones.append((cone.kind, cone.size, offset, cone.rows))
            offset += cone.rows
        self.rows = offset
        self.degree = sum(c.degree for c in cones)
        self.nonneg_mask = np.zeros(offset, dtype=bool)
        for kind, size, off, rows in self.cones:
            if kind == NONNEG:
                self.nonneg_mask[off:off + rows] = True

    def unit(self):
        e = np.zeros(self.rows)
        for kind, size, off, rows in self.cones:
            if kind == NONNEG:
                e[off:off + rows] = 1.0
            elif kind == SOC:
                e[off] = 1.0
            else:
                e[off:off + rows] = svec(np.eye(size))
        return e

    # Jordan algebra -------------------------------------------------------
    def product(self, u, v):
        out = np.empty_like(u)
        for kind, size, off, rows in self.cones:
            a, b = u[off:off + rows], v[off:off + rows]
            if kind == NONNEG:
                out[off:off + rows] = a * b
            elif kind == SOC:
                out[off] = a @ b
                out[off + 1:off + rows] = a[0] * b[1:] + b[0] * a[1:]
            else:
                am, bm = smat(a), smat(b)
                ab = am @ bm
                out[off:off + rows] = svec(0.5 * (ab + ab.T))
        return out

    def inner(self, u, v):
        return float(u @ v)

    def max_step(self, u, d, scaled):
        """Largest alpha >= 0 with u + alpha d in the cone (inf if unbounded).

        ``scaled`` carries the per-cone eigen-data of ``u`` when ``u`` is the
        scaled point lambda (diagonal in every PSD block); otherwise pass None.
        """
        alpha = np.inf
        for idx, (kind, size, off, rows) in enumerate(self.cones):
            a, b = u[off:off + rows], d[off:off + rows]
            if kind == NONNEG:
                neg = b < 0
                if np.any(neg):
                    alpha = min(alpha, float(np.min(-a[neg] / b[neg])))
            elif kind == SOC:
                alpha = min(alpha, _soc_max_step(a, b))
            else:
                if scaled is not None:
                    lam = scaled[idx]
                    inv_sqrt = 1.0 / np.sqrt(lam)
                    dm = smat(b) * np.outer(inv_sqrt, inv_sqrt)
                else:
                    am = smat(a)
                    w, v = np.linalg.eigh(am)
                    inv_sqrt = 1.0 / np.sqrt(np.maximum(w, 1e-300))
                    half = v * inv_sqrt
                    dm = half.T @ smat(b) @ half
                ev = np.linalg.eigvalsh(dm)[0]
                if ev < 0:
                    alpha = min(alpha, -1.0 / ev)
        return alpha

    def min_eig_ratio(self, u):
        """Per-cone membership measure: min eigenvalue divided by (1 + trace)."""
        worst = np.inf
        for kind, size, off, rows in self.cones:
            a = u[off:off + rows]
            if kind == NONNEG:
                val = float(np.min(a)) / (1.0 + abs(float(np.sum(a))))
            elif kind == SOC:
                val = (a[0] - np.linalg.norm(a[1:])) / (1.0 + abs(a[0]))
            else:
                m = smat(a)
                val = np.linalg.eigvalsh(m)[0] / (1.0 + abs(np.trace(m)))
            worst = min(worst, val)
        return worst

    def scaling(self, s, z):
        return NTScaling(self, s, z)


def _soc_max_step(a, b):
    # (a0 + t b0)^2 - |a1 + t b1|^2 >= 0 and a0 + t b0 >= 0
    qa = b[0] * b[0] - b[1:] @ b[1:]
    qb = 2.0 * (a[0] * b[0] - a[1:] @ b[1:])
    qc = a[0] * a[0] - a[1:] @ a[1:]
    qc = max(qc, 0.0)
    roots = []
    if abs(qa) < 1e-300:
        if qb < 0:
            roots.append(-qc / qb)
    else:
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            sq = math.sqrt(disc)
            q = -0.5 * (qb + math.copysign(sq, qb))
            for r in (q / qa, qc / q if q != 0 else np.inf):
                if r > 0:
                    roots.append(r)
    alpha = min(roots) if roots else np.inf
    if b[0] < 0:
        alpha = min(alpha, -a[0] / b[0])
    return alpha


class NTScaling:
    """Nesterov-Todd scaling W with W z = W^{-T} s = lambda.

    Per cone:
      nonneg  W = diag(sqrt(s / z))
      soc     W = beta (2 v v^T - J), v J-normalized
      psd     W(X) = R^T X R with R^T Z R = R^{-1} S R^{-T} = diag(lambda)
    """

    def __init__(self, coneset, s, z):
        self.cs = coneset
        self.data = []
        self.lam_eigs = []
        lam = np.empty(coneset.rows)
        for kind, size, off, rows in coneset.cones:
            sb, zb = s[off:off + rows], z[off:off + rows]
            if kind == NONNEG:
                d = np.sqrt(sb / zb)
                self.data.append(d)
                lam[off:off + rows] = np.sqrt(sb * zb)
                self.lam_eigs.append(None)
            elif kind == SOC:
                wmat, winv = _soc_scaling(sb, zb)
                self.data.append((wmat, winv))
                lam[off:off + rows] = wmat @ zb
                self.lam_eigs.append(None)
            else:
                r, rinv, l = _psd_scaling(smat(sb), smat(zb))
                self.data.append((r, rinv))
                lam[off:off + rows] = svec(np.diag(l))
                self.lam_eigs.append(l)
        self.lam = lam

    def updated(self, s, z, ds_s, dz_s, alpha):
        """Scaling at the stepped point, composed in the current scaled space.

        With s~ = lambda + alpha ds_s and z~ = lambda + alpha dz_s the new
        scaling is W~ W, where W~ scales (s~, z~). This keeps the scaling
        accurate when s and z approach the boundary, where factoring them
        from scratch loses the small eigenvalues.
        """
        new = object.__new__(NTScaling)
        new.cs = self.cs
        new.data = []
        new.lam_eigs = []
        lam = np.empty(self.cs.rows)
        st = self.lam + alpha * ds_s
        zt = self.lam + alpha * dz_s
        for (kind, size, off, rows), data in zip(self.cs.cones, self.data):
            sl = slice(off, off + rows)
            if kind == NONNEG:
                new.data.append(np.sqrt(s[sl] / z[sl]))
                lam[sl] = np.sqrt(st[sl] * zt[sl])
                new.lam_eigs.append(None)
            elif kind == SOC:
                wt, wtinv = _soc_scaling(st[sl], zt[sl])
                wmat, winv = data
                new.data.append((wt @ wmat, winv @ wtinv))
                lam[sl] = wt @ zt[sl]
                new.lam_eigs.append(None)
            else:
                rt, rtinv, l = _psd_scaling(smat(st[sl]), smat(zt[sl]))
                r, rinv = data
                new.data.append((r @ rt, rtinv @ rinv))
                lam[sl] = svec(np.diag(l))
                new.lam_eigs.append(l)
        new.lam = lam
        return new

    def _apply(self, v, which):
        out = np.empty_like(v)
        for (kind, size, off, rows), data in zip(self.cs.cones, self.data):
            b = v[off:off + rows]
            if kind == NONNEG:
                if which in ("W", "WT"):
                    out[off:off + rows] = b * data
                else:
                    out[off:off + rows] = b / data
            elif kind == SOC:
                mat = {"W": data[0], "WT": data[0].T, "Winv": data[1], "WinvT": data[1].T}[which]
                out[off:off + rows] = mat @ b
            else:
                r, rinv = data
                m = smat(b)
                if which == "W":
                    m = r.T @ m @ r
                elif which == "WT":
                    m = r @ m @ r.T
                elif which == "WinvT":
                    m = rinv @ m @ rinv.T
                else:  # Winv
                    m = rinv.T @ m @ rinv
                out[off:off + rows] = svec(0.5 * (m + m.T))
        return out

    def apply_w(self, v):
        return self._apply(v, "W")

    def apply_wt(self, v):
        return self._apply(v, "WT")

    def apply_winv_t(self, v):
        return self._apply(v, "WinvT")

    def apply_winv(self, v):
        return self._apply(v, "Winv")

    def inv_weight_blocks(self):
        """Dense per-cone matrices of (W^T W)^{-1} in cone coordinates."""
        blocks = []
        for (kind, size, off, rows), data in zip(self.cs.cones, self.data):
            if kind == NONNEG:
                blocks.append(np.diag(1.0 / data ** 2))
            elif kind == SOC:
                winv = data[1]
                blocks.append(winv @ winv.T)
            else:
                rinv = data[1]
                t = rinv.T @ rinv
                blocks.append(np.asarray(kernels.skron(0.5 * (t + t.T))))
        return blocks

    def inv_product(self, r):
        """Solve lambda o x = r for x."""
        out = np.empty_like(r)
        for idx, (kind, size, off, rows) in enumerate(self.cs.cones):
            lam = self.lam[off:off + rows]
            b = r[off:off + rows]
            if kind == NONNEG:
                out[off:off + rows] = b / lam
            elif kind == SOC:
                arw = lam[0] * np.eye(rows)
                arw[0, 1:] = lam[1:]
                arw[1:, 0] = lam[1:]
                out[off:off + rows] = np.linalg.solve(arw, b)
            else:
                l = self.lam_eigs[idx]
                i, j, _ = svec_indices(size)
                out[off:off + rows] = 2.0 * b / (l[i] + l[j])
        return out


def _jnorm(u):
    # sqrt(u0^2 - |u1|^2) without squaring the cancellation
    n1 = np.linalg.norm(u[1:])
    return math.sqrt(max((u[0] - n1) * (u[0] + n1), 1e-300))


def _soc_scaling(s, z):
    s_norm = _jnorm(s)
    z_norm = _jnorm(z)
    sb = s / s_norm
    zb = z / z_norm
    gamma = math.sqrt(max((1.0 + sb @ zb) / 2.0, 1e-300))
    jz = zb.copy()
    jz[1:] = -jz[1:]
    # w is the NT point (Q_w z = s up to scale); W uses its square root v
    w = (sb + jz) / (2.0 * gamma)
    v = w.copy()
    v[0] += 1.0
    v /= _jnorm(v)
    beta = math.sqrt(s_norm / z_norm)
    q = s.size
    j = np.eye(q)
    j[1:, 1:] *= -1.0
    h = 2.0 * np.outer(v, v) - j
    wmat = beta * h
    winv = (j @ h @ j) / beta
    return wmat, winv


def _psd_factor(m):
    m = 0.5 * (m + m.T)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(m)
        return v * np.sqrt(np.maximum(w, 1e-300))


def _psd_scaling(s, z):
    # L_z^T L_s = U diag(l) V^T;  R = L_s V l^{-1/2},  R^{-1} = l^{-1/2} U^T L_z^T
    ls = _psd_factor(s)
    lz = _psd_factor(z)
    u, sig, vt = np.linalg.svd(lz.T @ ls)
    inv_sqrt = 1.0 / np.sqrt(sig)
    r = (ls @ vt.T) * inv_sqrt
    rinv = (u.T @ lz.T) * inv_sqrt[:, None]
    return r, rinv, sig
