"""Exception types shared across the package."""


class RewriteAgainError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(RewriteAgainError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigurationError(RewriteAgainError):
    """A run or backend configuration is malformed or names unknown components."""


class BackendLoadError(RewriteAgainError):
    """A model checkpoint or backend could not be loaded."""


class CapabilityError(RewriteAgainError):
    """A backend was asked for a capability it does not implement."""


class DataValidationError(RewriteAgainError, ValueError):
    """A dataset file or record failed validation."""


class ValidationLeakError(RewriteAgainError):
    """Fine-tuning data overlaps the held-out validation split."""


class MissingArtifactError(RewriteAgainError):
    """A pipeline stage requires an artifact that an earlier stage has not produced."""

    def __init__(self, message: str, required_stage: str | None = None):
        super().__init__(message)
        self.required_stage = required_stage
