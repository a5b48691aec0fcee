"""Exception hierarchy shared across the package."""


class VmsrError(Exception):
    """Base class for all package errors."""


class ConfigError(VmsrError):
    """Bad or unknown configuration key/value (CLI exit code 2)."""


class MissingArtifactError(VmsrError):
    """A required upstream artifact is absent (CLI exit code 3)."""


class NumericalError(VmsrError):
    """Training diverged or produced non-finite values (CLI exit code 4)."""


class MazeGenerationError(VmsrError):
    """Map generation could not satisfy the layout invariants."""


class PlanError(VmsrError):
    """The analytic expert failed to produce a path."""
