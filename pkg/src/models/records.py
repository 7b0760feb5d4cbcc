from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.models.spaces import DualVec, StateVec


@dataclass(frozen=True, eq=False)
class StepRecord:
    """One node of the discrete trajectory; index 0 holds the initial data"""

    n: int
    t: float
    U: StateVec
    V: StateVec
    xi: DualVec
    f: StateVec
    B: DualVec
    zeta: DualVec
    psi_value: float = 0.0
    psi_star_value: float = 0.0
    energy_value: float = 0.0
    inner_iterations: int = 0
    optimality_residual: float = 0.0
    xi_residual: float = 0.0
    fy_gap: float = 0.0


@dataclass(eq=False)
class Trajectory:
    records: List[StepRecord]
    u0: StateVec
    v0: StateVec
    tau: float
    requested_tau: float
    T: float
    system: Any = None
    config: Any = None
    warnings: List[str] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.records) - 1

    @property
    def complete(self) -> bool:
        return self.N >= 1 and abs(self.records[-1].t - self.T) <= 1e-12 * max(1.0, self.T)

    @property
    def times(self) -> np.ndarray:
        return np.array([rec.t for rec in self.records])

    def states(self) -> np.ndarray:
        return np.vstack([rec.U.values for rec in self.records])

    def velocities(self) -> np.ndarray:
        return np.vstack([rec.V.values for rec in self.records])


@dataclass(frozen=True)
class EdiEntry:
    s: float
    t: float
    lhs: float
    rhs: float
    slack: float
    slack_half_lambda: float
    quadrature_error: float


@dataclass
class EdiReport:
    entries: List[EdiEntry]
    tolerance: float

    @property
    def min_slack(self) -> float:
        return min((e.slack for e in self.entries), default=0.0)

    @property
    def min_slack_half_lambda(self) -> float:
        return min((e.slack_half_lambda for e in self.entries), default=0.0)

    @property
    def violations(self) -> List[EdiEntry]:
        return [e for e in self.entries if e.slack < -self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class AprioriReport:
    M_velocity: float
    M_energy: float
    M_power: float
    dissipation_integral: float
    gap_U_under: float
    gap_U_hat: float
    gap_V_hat: float
    gap_V_under: float

    def as_rows(self) -> List[Tuple[str, float]]:
        return list(self.__dict__.items())

    @property
    def gaps(self) -> Tuple[float, float, float, float]:
        return self.gap_U_under, self.gap_U_hat, self.gap_V_hat, self.gap_V_under


@dataclass(frozen=True)
class ConvergenceRow:
    tau: float
    err_CH: float
    err_L2V: float
    err_V_CH: float
    order_estimate: Optional[float] = None


@dataclass
class ConvergenceTable:
    rows: List[ConvergenceRow]
    reference: str = "self"
    failure: Optional[str] = None


@dataclass(frozen=True)
class AuditEntry:
    name: str
    measured: float
    threshold: Optional[float]
    passed: bool
    detail: str = ""


@dataclass
class AuditReport:
    entries: List[AuditEntry]
    samples: int
    extras: Dict[str, float] = field(default_factory=dict)

    def __getitem__(self, name: str) -> AuditEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)
