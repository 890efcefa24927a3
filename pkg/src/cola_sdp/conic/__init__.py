"""Conic interior-point solver (zero, nonnegative, second-order and PSD cones)."""

from .cones import smat, svec, svec_position
from .problem import Cone, ConicProblem, ConicSolution, SolverSettings, Status
from .solver import residuals, solve


class ExternalSolverAdapter:
    """Seam for delegating a :class:`ConicProblem` to an external solver.

    Subclasses translate the slack-form problem into the external solver's
    input and map its answer back onto :class:`ConicSolution`.
    """

    name = "external"

    def solve(self, problem, settings=None):
        raise NotImplementedError(f"{type(self).__name__} has no backend wired in")


__all__ = [
    "Cone", "ConicProblem", "ConicSolution", "ExternalSolverAdapter", "SolverSettings",
    "Status", "residuals", "smat", "solve", "svec", "svec_position",
]
