from __future__ import annotations


class TPNNError(Exception):
    """Base class for every error raised by the tpnn package."""


class DataValidationError(TPNNError):
    """Input table is malformed. ``line`` is the 1-based file line when known."""

    def __init__(self, message: str, *, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SupportError(TPNNError, ValueError):
    """A response value lies outside the support of the likelihood family."""


class DegenerateBasisError(TPNNError, ArithmeticError):
    """The sigmoid mean of a basis factor is numerically zero."""


class ConfigError(TPNNError):
    """A config, spec or manifest document failed validation."""


class SchemaMismatchError(TPNNError):
    """Posterior samples and a dataset disagree on columns or family."""


class PosteriorError(TPNNError, ValueError):
    """Posterior states cannot support the requested summary, e.g. none were kept."""
