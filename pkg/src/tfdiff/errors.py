"""Exception hierarchy for tfdiff.

Library code raises these; only the CLI translates them into exit codes.
Each exception subclasses the matching builtin so callers that only know
``ValueError``/``KeyError``/``RuntimeError`` keep working.
"""

from typing import Any


class TfdiffError(Exception):
    """Base class for all tfdiff errors."""


class InvalidSignalError(TfdiffError, ValueError):
    """Signal is non-finite, degenerate, or has an unexpected shape."""


class StepOutOfRangeError(TfdiffError, ValueError):
    """Diffusion step index outside the schedule range."""

    def __init__(self, t: int, low: int, high: int):
        super().__init__(f"Step t={t} is outside the valid range [{low}, {high}]")
        self.t = t
        self.low = low
        self.high = high


class ScheduleViolationError(TfdiffError, ValueError):
    """Schedule breaks a convergence condition.

    Attributes:
        violations: Offending ``(t, n)`` index pairs (``n = -1`` for scalar checks)
        reason: Which condition failed
    """

    def __init__(self, reason: str, violations: list[tuple[int, int]]):
        shown = violations[:10]
        more = f" (+{len(violations) - len(shown)} more)" if len(violations) > len(shown) else ""
        super().__init__(f"{reason}: violating (t, n) = {shown}{more}")
        self.reason = reason
        self.violations = violations


class ConditionError(TfdiffError, KeyError):
    """Condition label does not match the model vocabulary."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "condition error"


class DatasetError(TfdiffError, ValueError):
    """Dataset index is empty, inconsistent, or refers to unusable files."""


class FormatError(TfdiffError, ValueError):
    """A CSEQ1 file, checkpoint or JSON artifact could not be decoded."""


class NonFiniteLossError(TfdiffError, RuntimeError):
    """Training produced a NaN/Inf loss.

    Attributes:
        diagnostics: Step indices, item ids and gradient norms at failure
    """

    def __init__(self, message: str, diagnostics: dict[str, Any]):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


class DivergenceError(TfdiffError, RuntimeError):
    """Loss stayed far above its initial value for too long."""

    def __init__(self, step: int, loss: float, initial_loss: float):
        super().__init__(
            f"Training diverged at step {step}: loss {loss:.4g} vs initial {initial_loss:.4g}"
        )
        self.step = step
        self.loss = loss
        self.initial_loss = initial_loss
