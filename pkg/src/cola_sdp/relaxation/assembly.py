"""Incremental assembly of slack-form conic problems, one cone block at a time."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..conic import Cone, ConicProblem


class RowAssembler:
    """Collects rows of ``A x + s = b`` grouped into cone blocks.

    Rows are appended to an open block; :meth:`close` fixes the block's cone.
    Rows state ``sum(vals * x[cols]) + s = rhs``.
    """

    def __init__(self, n_vars):
        self.n = n_vars
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = []
        self.cones = []
        self.labels = []
        self._open = 0

    @property
    def m(self):
        return len(self.rhs)

    def add(self, cols, vals, rhs, label=""):
        r = len(self.rhs)
        cols = np.asarray(cols, dtype=int).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        self.rows.append(np.full(cols.size, r))
        self.cols.append(cols)
        self.vals.append(vals)
        self.rhs.append(float(rhs))
        self.labels.append(label)
        self._open += 1
        return r

    def close(self, kind, size=None):
        """Attach the rows added since the last close to one cone block."""
        if self._open == 0:
            return
        if kind == "psd":
            order = size
            if order * (order + 1) // 2 != self._open:
                raise ValueError("psd block row count mismatch")
            self.cones.append(Cone.psd(order))
        elif kind == "soc":
            self.cones.append(Cone.soc(self._open))
        elif kind == "zero":
            self.cones.append(Cone.zero(self._open))
        elif kind == "nonneg":
            self.cones.append(Cone.nonneg(self._open))
        else:
            raise ValueError(kind)
        self._open = 0

    def psd_block(self, cols, order):
        """Rows -x[cols] + s = 0 with s in the PSD cone of the given order."""
        if self._open:
            raise RuntimeError("close the open block first")
        for c in cols:
            self.add([c], [-1.0], 0.0, "psd")
        self.close("psd", order)

    def build(self, c):
        if self._open:
            raise RuntimeError("unclosed block")
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        a = sp.csr_matrix((vals, (rows, cols)), shape=(self.m, self.n))
        return ConicProblem(c, a, np.array(self.rhs), self.cones)
