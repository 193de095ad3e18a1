"""Exception types shared across the pipeline."""


class SubshapError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SubshapError):
    """A cell or file could not be parsed (carries row/column context)."""


class ValidationError(SubshapError):
    """Data violates a structural invariant (bad target, id collision, ...)."""


class ConfigError(SubshapError):
    """A configuration value is out of range or inconsistent."""


class StageError(SubshapError):
    """A pipeline stage failed; `stage` names the failing step."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
