"""Exception hierarchy.

Validation problems (bad input, violated hypotheses) derive from
:class:`ValidationError`; failures of a numerical procedure derive from
:class:`NumericError`. The CLI maps the two families to distinct exit codes.
"""


class FracSteerError(Exception):
    """Base class for all library errors."""


class ValidationError(FracSteerError, ValueError):
    """Input outside the admissible domain of an operation or model."""


class DomainError(ValidationError):
    """Argument outside the mathematical domain of a function."""


class ContractError(ValidationError):
    """Arguments are individually valid but mutually inconsistent."""


class AssumptionError(ValidationError):
    """A standing hypothesis of the model fails and no override was given."""


class TermDefinitionError(ValidationError):
    """A nonsmooth term returned an ill-formed generalized gradient."""


class ConfigError(ValidationError):
    """A configuration document failed to parse or validate."""


class NumericError(FracSteerError, ArithmeticError):
    """A numerical procedure produced non-finite or unusable output."""


class EvaluationError(NumericError):
    """A special-function evaluation did not converge."""

    def __init__(self, message, **params):
        if params:
            detail = ", ".join(f"{k}={v!r}" for k, v in params.items())
            message = f"{message} ({detail})"
        super().__init__(message)
        self.params = params


class RangeError(NumericError):
    """Series representation is numerically unusable for this argument."""


class ResolventError(NumericError):
    """The nonlocal resolvent is singular for some mode."""


class ResolutionError(NumericError):
    """The time grid is too coarse for the requested operation."""
