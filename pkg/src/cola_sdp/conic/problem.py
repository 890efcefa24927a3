"""
Standard-form conic problem, solution container and the text dump format.

Problem form::

    minimize    c^T x
    subject to  A x + s = b,   s in K = K_1 x ... x K_m

Each cone block covers a contiguous run of slack rows in the order listed.
PSD blocks hold a symmetric matrix in ``svec`` form: lower triangle,
column-major, off-diagonal entries multiplied by sqrt(2), so that
``svec(X) @ svec(Y) == trace(X @ Y)``.

Dump format (line-oriented, ``#`` starts a comment line)::

    conic-dump 1
    dims <m> <n> <nnz>
    cones <k>
    <kind> <size>            # k lines; kind in zero|nonneg|soc|psd
    A                        # nnz triplet lines follow
    <row> <col> <value>
    b
    <value>                  # m lines
    c
    <value>                  # n lines

Indices are zero-based; values are written with 17 significant digits so a
dump reloads bit-exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeMismatch

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
PSD = "psd"
_KINDS = (ZERO, NONNEG, SOC, PSD)


@dataclass(frozen=True)
class Cone:
    """One cone block. ``size`` is the dimension, or the matrix order for PSD."""

    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("cone size must be positive")

    @property
    def rows(self):
        if self.kind == PSD:
            return self.size * (self.size + 1) // 2
        return self.size

    @property
    def degree(self):
        """Barrier degree (contribution to the complementarity normalizer)."""
        if self.kind in (NONNEG, PSD):
            return self.size
        if self.kind == SOC:
            return 1
        return 0

    @classmethod
    def zero(cls, dim):
        return cls(ZERO, dim)

    @classmethod
    def nonneg(cls, dim):
        return cls(NONNEG, dim)

    @classmethod
    def soc(cls, dim):
        return cls(SOC, dim)

    @classmethod
    def psd(cls, order):
        return cls(PSD, order)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverSettings:
    rel_gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iterations: int = 100
    step_fraction: float = 0.99
    verbose: bool = False

    def __post_init__(self):
        if self.rel_gap_tol <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


class ConicProblem:
    """Immutable conic program in slack form (see module docstring)."""

    def __init__(self, c, a, b, cones):
        self.c = np.array(c, dtype=float).ravel()
        self.a = sp.csr_matrix(a, dtype=float, copy=True)
        self.a.sum_duplicates()
        self.a.eliminate_zeros()
        self.b = np.array(b, dtype=float).ravel()
        self.cones = tuple(cones)
        for arr in (self.c, self.b, self.a.data):
            arr.setflags(write=False)
        self._validate()

    @property
    def n(self):
        return self.c.size

    @property
    def m(self):
        return self.b.size

    def _validate(self):
        m, n = self.a.shape
        if n != self.n or m != self.m:
            raise ShapeMismatch(f"A is {m}x{n} but b has {self.m} and c has {self.n} entries")
        if sum(k.rows for k in self.cones) != m:
            raise ShapeMismatch("cone dimensions do not sum to the number of rows")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.a.data))):
            raise ValueError("problem data must be finite")
        # a constant row carries no information for the solver; models write
        # bounds through a variable instead (e.g. an SOC head b_u * M_00)
        empty = np.flatnonzero(np.diff(self.a.indptr) == 0)
        if empty.size:
            raise ValueError(f"constraint rows must not be empty (first empty row {empty[0]})")

    def cone_slices(self):
        """Yield (cone, slice of rows) pairs in row order."""
        start = 0
        for cone in self.cones:
            yield cone, slice(start, start + cone.rows)
            start += cone.rows

    @property
    def degree(self):
        return sum(k.degree for k in self.cones)

    def count_rows(self, kind):
        return sum(k.rows for k in self.cones if k.kind == kind)

    # ----------------------------------------------------------------- dump
    def dumps(self):
        coo = self.a.tocoo()
        lines = ["conic-dump 1", f"dims {self.m} {self.n} {coo.nnz}", f"cones {len(self.cones)}"]
        lines += [f"{k.kind} {k.size}" for k in self.cones]
        lines.append("A")
        order = np.lexsort((coo.col, coo.row))
        lines += [f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}" for i in order]
        lines.append("b")
        lines += [f"{v:.17g}" for v in self.b]
        lines.append("c")
        lines += [f"{v:.17g}" for v in self.c]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        it = iter(lines)
        header = next(it).split()
        if header[:2] != ["conic-dump", "1"]:
            raise ValueError("not a conic dump (bad header)")
        _, m, n, nnz = next(it).split()
        m, n, nnz = int(m), int(n), int(nnz)
        tag, k = next(it).split()
        cones = []
        for _ in range(int(k)):
            kind, size = next(it).split()
            cones.append(Cone(kind, int(size)))
        if next(it) != "A":
            raise ValueError("expected A section")
        rows, cols, vals = np.empty(nnz, int), np.empty(nnz, int), np.empty(nnz)
        for i in range(nnz):
            r, cc, v = next(it).split()
            rows[i], cols[i], vals[i] = int(r), int(cc), float(v)
        if next(it) != "b":
            raise ValueError("expected b section")
        b = np.array([float(next(it)) for _ in range(m)])
        if next(it) != "c":
            raise ValueError("expected c section")
        c = np.array([float(next(it)) for _ in range(n)])
        a = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        return cls(c, a, b, cones)


@dataclass(frozen=True)
class ConicSolution:
    primal: np.ndarray
    dual: np.ndarray
    slack: np.ndarray
    status: Status
    primal_obj: float
    dual_obj: float
    gap: float
    iterations: int
    primal_res: float = float("nan")
    dual_res: float = float("nan")

    @property
    def optimal(self):
        return self.status == Status.OPTIMAL
