"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class DimensionError(ValidationError):
    """Array shapes do not line up for the requested operation."""


class ConfigurationError(ValueError):
    """A structural parameter (kernel size, head count, ...) is unusable."""


class ParseError(ValueError):
    """A text record could not be parsed; carries line number and field."""

    def __init__(self, message: str, line_number: int | None = None, field: str | None = None):
        self.line_number = line_number
        self.field = field
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)


class BudgetExceededError(RuntimeError):
    """Exhaustive search refused: the candidate space exceeds the evaluation budget."""

    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"exhaustive search needs {required} reward evaluations, budget is {budget}; "
            f"raise the budget or use a greedy strategy"
        )


class TransportError(RuntimeError):
    """Remote completion backend unreachable after retries."""

    def __init__(self, message: str, retries: int):
        self.retries = retries
        super().__init__(f"{message} (after {retries} retries)")


class ResponseFormatError(ValueError):
    """A backend response (or prompt fed to the mock) could not be interpreted."""

    def __init__(self, message: str, raw_response: str = ""):
        self.raw_response = raw_response
        super().__init__(message)
