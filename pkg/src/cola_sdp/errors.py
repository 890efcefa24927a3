"""Exception types raised across the package."""


class ColaError(Exception):
    """Base class for all package errors."""


# dynamics
class SubOrbitalState(ColaError):
    """Position magnitude is below the Earth radius."""


class IntegrationFailure(ColaError):
    """Adaptive integrator could not meet tolerance (step-size underflow)."""


# cdm
class CdmError(ColaError):
    pass


class MissingKey(CdmError):
    def __init__(self, name):
        super().__init__(f"missing mandatory key {name!r}")
        self.name = name


class DuplicateKey(CdmError):
    def __init__(self, name):
        super().__init__(f"duplicate key {name!r}")
        self.name = name


class MalformedLine(CdmError):
    def __init__(self, line_no, line=""):
        super().__init__(f"malformed line {line_no}: {line!r}")
        self.line_no = line_no


class UnsupportedFrame(CdmError):
    def __init__(self, value):
        super().__init__(f"unsupported reference frame {value!r} (only EME2000)")
        self.value = value


class NonPsdCovariance(ColaError):
    """Covariance has an eigenvalue below the round-off allowance."""


class DegenerateState(ColaError):
    """Position and velocity are parallel (no orbital plane)."""


# conjunction
class DegenerateEncounter(ColaError):
    """Relative position and velocity are parallel or velocity vanishes."""


class SingularProjectedCovariance(ColaError):
    """Projected 2x2 covariance is not positive definite."""


class TargetUnreachable(ColaError):
    """Target probability exceeds the density ceiling R^2 / (2 sqrt(det C))."""


# relaxation / conic
class InfeasibleSpec(ColaError):
    pass


class NotOptimal(ColaError):
    def __init__(self, status):
        super().__init__(f"solver status is {status}, expected Optimal")
        self.status = status


class LeadingEntryNearZero(ColaError):
    pass


class ShapeMismatch(ColaError):
    pass


class SolverFailure(ColaError):
    pass


class AllSamplesInfeasible(ColaError):
    pass
