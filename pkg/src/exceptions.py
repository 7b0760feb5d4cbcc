"""Error hierarchy shared by the solver, the diagnostics and the CLI."""
from __future__ import annotations

from typing import Any, Optional

import numpy as np


class DinsysError(Exception):
    """Base class for every error raised by the package"""


class ContractViolation(DinsysError, ValueError):
    """Inputs that break an operation's preconditions"""


class ConfigError(DinsysError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(DinsysError):
    def __init__(self, message: str, condition: float = float("nan")):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class DomainError(DinsysError):
    """A functional evaluated to a non-finite value"""


class IterationLimitError(DinsysError):
    def __init__(self, message: str, best: Optional[np.ndarray] = None, residual: float = float("nan")):
        self.best = best
        self.residual = residual
        super().__init__(message)


class StepFailure(DinsysError):
    def __init__(self, message: str, step: int, best: Optional[np.ndarray] = None,
                 residual: float = float("nan")):
        self.step = step
        self.best = best
        self.residual = residual
        self.trajectory: Any = None
        super().__init__(f"step {step}: {message}")


class EdiViolation(DinsysError):
    def __init__(self, s: float, t: float, slack: float):
        self.s = s
        self.t = t
        self.slack = slack
        super().__init__(f"discrete energy-dissipation inequality violated on [{s!r}, {t!r}]: slack {slack:.3e}")
