"""Exception hierarchy shared by all jeq modules."""


class JeqError(Exception):
    """Base class of every error raised on purpose by jeq."""


# geometry

class NonPositiveMetric(JeqError):
    """A Hermitian field expected to be a Kähler metric has an eigenvalue <= 0."""

    def __init__(self, message: str, point: tuple = None, value: float = None):
        super().__init__(message)
        self.point = point
        self.value = value


class NonPositiveWeight(JeqError):
    pass


class MetricDegenerate(JeqError):
    """The fiber coefficient c(t) (or the D-block) of a cusp profile lost positivity."""


class DegenerateClass(JeqError):
    pass


# solvers

class SolverError(JeqError):
    """Base class of numerical solver failures."""


class NewtonStalled(SolverError):
    pass


class LinearSolveFailed(SolverError):
    pass


class MaxIters(SolverError):
    pass


class ContinuationFailed(SolverError):
    pass


class TailFitFailed(SolverError):
    pass


class FitDegenerate(SolverError):
    pass


class WindowTooShort(SolverError):
    pass


class SolvabilityViolated(SolverError):
    pass


# functionals

class NonPositiveDensity(JeqError):
    pass


class NotNormalized(JeqError):
    pass


# cohomology classes

class DegeneratePairing(JeqError):
    pass


class DegenerateRestriction(JeqError):
    pass


class ConditionViolated(JeqError):
    pass


# command line

class ConfigInvalid(JeqError):
    """Scenario validation failure; `field` is the dotted path of the offending key."""

    def __init__(self, message: str, field: str = None, line: int = None):
        super().__init__(message)
        self.field = field
        self.line = line


class SolverFailed(JeqError):
    """A solver error surfaced at the command line.

    The underlying error is in `__cause__`.
    """
