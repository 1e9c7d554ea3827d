"""Exception hierarchy.

Validation problems subclass ``ValidationError`` (CLI exit code 2); failures
discovered while computing subclass ``ComputationError`` (exit code 3).
"""


class ValidationError(ValueError):
    """Bad input detected before any computation."""


class ConfigurationError(ValidationError):
    pass


class DomainError(ValidationError):
    """Evaluation point outside [0, 1] (or the open interval where required)."""


class ArgumentError(ValidationError):
    pass


class ResolutionError(ValidationError):
    """Quadrature grid too coarse for the requested index set."""


class ProtocolError(ValidationError):
    """Transcripts from one round disagree on their index set."""


class ComputationError(RuntimeError):
    pass


class GenerationError(ComputationError):
    """Random density generation ran out of rejection attempts."""


class InternalError(ComputationError):
    pass


class SolverError(ComputationError):
    """The LP solver did not reach an optimal basis."""
