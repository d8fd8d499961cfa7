"""Exception and warning classes shared across the toolkit."""


class ModelUQError(Exception):
    """Base class for all errors raised by modeluq."""


# -- state equation / solver ---------------------------------------------------


class ModelDefinitionError(ModelUQError):
    """The model violates a structural requirement (e.g. rectangular E)."""


class NonConvergence(ModelUQError):
    """An iterative solver hit its iteration limit."""


class SingularJacobian(ModelUQError):
    """The state Jacobian is singular or too ill-conditioned to invert."""


# -- estimation ----------------------------------------------------------------


class RankDeficient(ModelUQError):
    """The weighted Jacobian does not have full column rank."""


class SingularH(ModelUQError):
    """The Hessian of the least-squares objective cannot be inverted."""


class SingularHWarning(UserWarning):
    """H was indefinite; a clipped pseudo-inverse was used instead."""


# -- design of experiments -----------------------------------------------------


class NonFiniteC(ModelUQError):
    """A covariance matrix contains non-finite entries."""


class NoFeasibleDesign(ModelUQError):
    """No sensor subset satisfies the design constraints."""


class IllConditionedDesignWarning(UserWarning):
    """A sensor design is feasible but numerically close to singular."""


# -- statistics ----------------------------------------------------------------


class DomainError(ModelUQError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class SingularC(ModelUQError):
    """A covariance matrix is not positive definite."""


class SampleTooSmall(ModelUQError, ValueError):
    pass


class ConstantSample(ModelUQError, ValueError):
    pass


class OddSeriesCount(ModelUQError, ValueError):
    pass


class NegativeInput(ModelUQError, ValueError):
    pass


class EmptySplit(ModelUQError):
    pass


class NormalityRejected(ModelUQError):
    """The measurement errors failed the normality screen."""


class NormalityWarning(UserWarning):
    pass


# -- press surrogate -----------------------------------------------------------


class InvalidTopology(ModelUQError):
    """The assembled structure is disconnected or otherwise singular."""


class UninitializedState(ModelUQError):
    pass


class UntrainedModel(ModelUQError):
    pass


class DegenerateTraining(ModelUQError):
    pass


class ZeroRealizedForce(ModelUQError, ValueError):
    pass


# -- I/O -----------------------------------------------------------------------


class ConfigError(ModelUQError):
    pass


class DataError(ModelUQError):
    """Base class for measurement-file problems."""


class MalformedRow(DataError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DimensionMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    pass
