from __future__ import annotations


class ParameterError(ValueError):
    """Invalid model or simulation parameters."""


class IllPosedError(ValueError):
    """Raised when a closed form is requested for an ill-posed problem."""

    def __init__(self, classification, message: str | None = None):
        self.classification = classification
        super().__init__(message or f"problem is ill-posed: {classification.kind.value}")


class ConcavityError(ValueError):
    """The value bundle does not satisfy v_x > 0, v_xx < 0."""


class RootFindingError(RuntimeError):
    """Bracketing root search failed; carries the last bracket."""

    def __init__(self, message: str, bracket: tuple[float, float] | None = None):
        self.bracket = bracket
        if bracket is not None:
            message = f"{message} (bracket=[{bracket[0]!r}, {bracket[1]!r}])"
        super().__init__(message)


class PolicyError(RuntimeError):
    """A policy callback failed or produced inadmissible controls."""
