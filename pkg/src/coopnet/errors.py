"""Exception hierarchy shared by every module of the package."""


class ModelError(Exception):
    """Base class for all errors raised by coopnet."""


class ParameterError(ModelError, ValueError):
    """A single violated constraint on a :class:`NetworkParams` field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class AlphaOutOfRange(ParameterError):
    pass


class NonPositiveParameter(ParameterError):
    pass


class ApertureOutOfRange(ParameterError):
    pass


class ProbabilityOutOfRange(ParameterError):
    pass


class CorrelationMagnitudeExceedsOne(ParameterError):
    pass


class ValidationError(ModelError, ValueError):
    """Raised when one or more parameter constraints fail.

    ``violations`` holds the individual :class:`ParameterError` instances.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid parameters: {lines}")


class CoincidentPoints(ModelError, ValueError):
    pass


class UnsupportedCorrelation(ModelError, ValueError):
    pass


class HypothesisViolated(ModelError, ValueError):
    pass


class RootNotBracketed(ModelError, RuntimeError):
    pass


class QuadratureNonConvergence(ModelError, RuntimeError):
    pass


class IntegrationBudgetExceeded(ModelError, RuntimeError):
    def __init__(self, message, achieved_rel_error=None):
        self.achieved_rel_error = achieved_rel_error
        super().__init__(message)


class TargetUnreachable(ModelError, ValueError):
    pass


class MaxIterationsExceeded(ModelError, RuntimeError):
    pass


class ConfigParseError(ModelError, ValueError):
    pass


class UnknownFigure(ModelError, KeyError):
    pass
