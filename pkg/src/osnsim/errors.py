"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class OsnSimError(Exception):
    """Base class for every error raised by osnsim."""


class ConfigError(OsnSimError, ValueError):
    """Invalid configuration. ``field`` names the offending setting when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ValidationError(OsnSimError, ValueError):
    pass


class ConstraintViolation(ValidationError):
    def __init__(self, constraint: str, detail: str = ""):
        super().__init__(f"{constraint}: {detail}" if detail else constraint)
        self.constraint = constraint


class GenerationError(OsnSimError):
    """Text generation failed. Retryable unless stated otherwise."""

    retryable = True

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class RefusalError(GenerationError):
    """The backend refused on content-safety grounds."""

    retryable = False


class PromptAssemblyError(OsnSimError, ValueError):
    def __init__(self, placeholder: str):
        super().__init__(f"missing value for prompt placeholder {placeholder}")
        self.placeholder = placeholder


class ScoreParseError(OsnSimError, ValueError):
    pass


class PlanningError(OsnSimError):
    pass


class HarnessError(OsnSimError):
    pass


class BackendError(OsnSimError):
    """A text-generation backend is misconfigured or unreachable."""
