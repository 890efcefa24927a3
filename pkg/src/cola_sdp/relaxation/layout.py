"""
Flat decision-vector layout for the per-knot moment matrices.

Block k (0-based, k < N-1) is the 10x10 moment matrix of z_k = (1, dx_k, u_k);
the terminal block is the 7x7 moment matrix of z_N = (1, dx_N). Each block is
stored as its ``svec`` (lower triangle, column-major, sqrt(2) off-diagonal)
and the blocks are concatenated in knot order, optionally followed by extra
scalar variables (the contingency epigraph variable).

Index convention inside a block: 0 is the constant, 1..6 the state, 7..9 the
control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..conic.cones import smat, svec, svec_indices, svec_position

STATE_DIM = 6
CONTROL_DIM = 3
STEP_BLOCK = 1 + STATE_DIM + CONTROL_DIM
TERMINAL_BLOCK = 1 + STATE_DIM

X = slice(1, 1 + STATE_DIM)
U = slice(1 + STATE_DIM, STEP_BLOCK)


def functional(coef):
    """svec coefficients of the linear map M -> sum_ij coef[i, j] M[i, j]."""
    coef = np.asarray(coef, dtype=float)
    return svec(0.5 * (coef + coef.T))


@dataclass(frozen=True)
class MomentLayout:
    n_knots: int
    n_extra: int = 0

    def __post_init__(self):
        if self.n_knots < 2:
            raise ValueError("n_knots must be >= 2")

    @property
    def state_dim(self):
        return STATE_DIM

    @property
    def control_dim(self):
        return CONTROL_DIM

    @property
    def block_dims(self):
        return [STEP_BLOCK] * (self.n_knots - 1) + [TERMINAL_BLOCK]

    @property
    def offsets(self):
        sizes = [d * (d + 1) // 2 for d in self.block_dims]
        return list(np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int))

    @property
    def block_size_total(self):
        return sum(d * (d + 1) // 2 for d in self.block_dims)

    @property
    def n_vars(self):
        return self.block_size_total + self.n_extra

    def extra_index(self, i=0):
        if not 0 <= i < self.n_extra:
            raise IndexError("no such extra variable")
        return self.block_size_total + i

    def block_slice(self, k):
        d = self.block_dims[k]
        off = self.offsets[k]
        return slice(off, off + d * (d + 1) // 2)

    def index(self, k, i, j):
        """Flat index of M_k[i, j]."""
        return self.offsets[k] + svec_position(self.block_dims[k], i, j)

    def block(self, x, k):
        """Symmetric matrix M_k read from the flat vector ``x``."""
        return smat(np.asarray(x)[self.block_slice(k)])

    def pack(self, blocks, extra=()):
        """Flat vector from a list of block matrices (inverse of :meth:`block`)."""
        if len(blocks) != self.n_knots:
            raise ValueError("one matrix per knot expected")
        parts = [svec(m) for m in blocks]
        return np.concatenate(parts + [np.asarray(extra, dtype=float).reshape(self.n_extra)])

    def block_functional(self, k, coef):
        """(columns, values) realizing sum coef[i, j] M_k[i, j] on the flat vector."""
        vals = functional(coef)
        cols = np.arange(self.block_slice(k).start, self.block_slice(k).stop)
        keep = vals != 0.0
        return cols[keep], vals[keep]

    # selectors -----------------------------------------------------------
    def _selector(self, k, pairs):
        rows, cols, vals = [], [], []
        for r, (i, j) in enumerate(pairs):
            rows.append(r)
            cols.append(self.index(k, i, j))
            vals.append(1.0 if i == j else 1.0 / np.sqrt(2.0))
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(pairs), self.n_vars))

    def _check_step(self, k, name):
        if not 0 <= k < self.n_knots:
            raise IndexError(f"knot {k} out of range")
        if k == self.n_knots - 1 and name in ("u", "uu", "xu"):
            raise IndexError("the terminal block has no control entries")

    def selector(self, name, k):
        """Sparse map x -> the named moment entries of block k.

        Names: ``x`` (L_x), ``u`` (L_u), ``xx`` (L_xx, row-major 6x6),
        ``uu`` (L_uu, row-major 3x3), ``xu`` (L_xu, row-major 6x3). The
        terminal block supports ``x`` and ``xx`` (L_xN, L_xxN).
        """
        self._check_step(k, name)
        xs = range(1, 1 + STATE_DIM)
        us = range(1 + STATE_DIM, STEP_BLOCK)
        if name == "x":
            pairs = [(i, 0) for i in xs]
        elif name == "u":
            pairs = [(i, 0) for i in us]
        elif name == "xx":
            pairs = [(i, j) for i in xs for j in xs]
        elif name == "uu":
            pairs = [(i, j) for i in us for j in us]
        elif name == "xu":
            pairs = [(i, j) for i in xs for j in us]
        else:
            raise ValueError(f"unknown selector {name!r}")
        return self._selector(k, pairs)

    def disjoint_cover(self):
        """True when block slices tile [0, block_size_total) without overlap."""
        marks = np.zeros(self.n_vars, dtype=int)
        for k in range(self.n_knots):
            marks[self.block_slice(k)] += 1
        marks[self.block_size_total:] += 1
        return bool(np.all(marks == 1))


def lower_pairs(dim):
    """(i, j) pairs of the lower triangle in svec order."""
    rows, cols, _ = svec_indices(dim)
    return list(zip(rows.tolist(), cols.tolist()))
