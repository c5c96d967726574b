"""Exception taxonomy shared across the package."""


class EmsSimError(Exception):
    """Base class for all package errors."""


# -- geometry ---------------------------------------------------------------

class OffSphere(EmsSimError):
    """Cartesian point is not on the Earth sphere within tolerance."""


class InvalidSpeed(EmsSimError):
    """Speed must be strictly positive."""


class AmbiguousGeodesic(EmsSimError):
    """Endpoints are antipodal; the great-circle path is not unique."""


# -- street graph -----------------------------------------------------------

class ParseError(EmsSimError):
    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(EmsSimError):
    """Structurally invalid graph or partition."""


class Unreachable(EmsSimError):
    """No path exists between the snapped endpoints."""


class EmptyGraph(EmsSimError):
    """Graph has no nodes; callers fall back to great-circle travel."""


# -- forecast ---------------------------------------------------------------

class InvalidRegion(EmsSimError):
    """Degenerate bounding box or partition geometry."""


class Infeasible(EmsSimError):
    """No coefficient vector satisfies the intensity positivity constraints."""


class MaxIterations(EmsSimError):
    """Solver hit the iteration cap; ``.last_iterate`` holds the best point."""

    def __init__(self, message, last_iterate=None, objective=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.objective = objective


# -- dispatch / simulation --------------------------------------------------

class InvalidDuration(EmsSimError):
    """Durations must be nonnegative."""


class UnknownTypePair(EmsSimError):
    """No compatibility cost configured for this (ambulance, call) type pair."""


class EmptyFleet(EmsSimError):
    """A dispatch decision was requested with no ambulances configured."""


class OutOfRange(EmsSimError):
    """Timestamp outside the simulated window."""


class InvalidStep(EmsSimError):
    """Discretization step must be strictly positive."""


# -- metrics ----------------------------------------------------------------

class EmptySelection(EmsSimError):
    """Filter selected no records."""


# -- configuration ----------------------------------------------------------

class ConfigError(EmsSimError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
