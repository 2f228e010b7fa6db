"""Exception hierarchy shared by every module."""


class ArtifactError(Exception):
    """Base class for all package errors."""


class InvalidModelError(ArtifactError, ValueError):
    """An MDP or world model violates its invariants."""


class InvalidParameterError(ArtifactError, ValueError):
    """A scalar or array parameter is out of its admissible range."""


class InvalidObservationError(ArtifactError, ValueError):
    """An observation cannot be ingested (non-finite, inconsistent counts)."""


class InvalidActionError(ArtifactError, ValueError):
    """An action is not admissible in the current world state."""


class InsufficientInformationError(ArtifactError, ValueError):
    """A posterior quantity is requested before it is defined."""


class NumericalFailureError(ArtifactError, ArithmeticError):
    """A linear solve or reduction produced a non-finite result."""


class ConfigError(ArtifactError, ValueError):
    """An experiment configuration names something unknown or is malformed."""


class WorldTerminatedError(ArtifactError, RuntimeError):
    """A world refused to step because it reached a terminal condition."""
