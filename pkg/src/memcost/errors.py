"""Exception hierarchy.

``MemcostError`` covers everything caused by bad inputs or bad
configuration; the CLI maps it to exit code 1. Anything else escaping a
command is an internal error (exit code 2).
"""


class MemcostError(Exception):
    """Base class for input/config/contract errors."""


class ParseError(MemcostError):
    """Malformed CoNLL-U input."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class TreeValidationError(MemcostError):
    """Invalid dependency tree encountered while policy is 'abort'."""


class SegmentationError(MemcostError):
    """Region spans do not tile the sentence."""


class AlignmentError(MemcostError):
    """Reading-time observations reference unknown regions."""


class FeatureBuildError(MemcostError):
    """Feature matrix cannot be assembled from the given inputs."""


class ConfigError(MemcostError):
    """Missing or inconsistent configuration."""


class ContractViolation(MemcostError):
    """An operation was called outside its stated preconditions."""


class SingularDesignError(MemcostError):
    """Rank-deficient regression design; never silently regularized."""

    def __init__(self, message: str, columns: list[str] | None = None):
        self.columns = columns or []
        if self.columns:
            message = f"{message} (collinear columns: {', '.join(self.columns)})"
        super().__init__(message)
