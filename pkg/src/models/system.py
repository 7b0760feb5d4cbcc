from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence, Tuple

import numpy as np

from src.models.convex import DissipationSpec
from src.models.energies import EnergyFunctional, GradientPotentialTerm
from src.models.spaces import NormFamily
from src.numerics.expressions import SpaceTimeExpression

REGULARIZATION_EPS = 1e-12


def regularized_power(x: np.ndarray, exponent: float) -> np.ndarray:
    """|x|^e, smoothed as (x^2 + eps^2)^(e/2) when e < 1"""
    if exponent < 1.0:
        return (x * x + REGULARIZATION_EPS ** 2) ** (0.5 * exponent)
    return np.abs(x) ** exponent


@dataclass(frozen=True)
class ZeroPerturbation:
    dimension: int

    def __call__(self, t: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.zeros(self.dimension)


@dataclass(frozen=True, eq=False)
class PowerPerturbation:
    """B(t,u,v) = M (s_u |u|^(q-1) + s_v |v|^(r-1)) with a lumped mass M"""

    weights: np.ndarray
    s_u: float = 1.0
    q: float = 2.0
    s_v: float = 0.0
    r: float = 2.0

    def __call__(self, t: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = self.s_u * regularized_power(u, self.q - 1.0)
        if self.s_v != 0.0:
            out = out + self.s_v * regularized_power(v, self.r - 1.0)
        return self.weights * out


@dataclass(frozen=True)
class NonlinearLaw:
    """b(u): linear k u, cubic u^3 continued with (q-1)-growth beyond |u| = R, or zero"""

    kind: Literal["linear", "cubic_truncated", "zero"] = "linear"
    coefficient: float = 1.0
    radius: float = 1.0
    q: float = 2.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return self.coefficient * u
        R = self.radius
        a = np.abs(u)
        outer = R ** 3 * (np.maximum(a, R) / R) ** (self.q - 1.0)
        return self.coefficient * np.sign(u) * np.where(a <= R, a ** 3, outer)


@dataclass(frozen=True, eq=False)
class NodalPerturbation:
    """B(t,u,v) = M b(u)"""

    weights: np.ndarray
    law: NonlinearLaw

    def __call__(self, t: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.weights * self.law(u)


@dataclass(frozen=True, eq=False)
class StressPerturbation:
    """B(t,u,v) = -div sigma(grad u) as the functional w -> sum_e w_e sigma((Eu)_e)(Ew)_e"""

    term: GradientPotentialTerm

    def __call__(self, t: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.term.gradient(u)


@dataclass(frozen=True, eq=False)
class Forcing:
    """f(t) sampled at the interior nodes (or broadcast over a model space)"""

    expression: Optional[SpaceTimeExpression]
    coords: Tuple[np.ndarray, ...]
    dimension: int

    @classmethod
    def zero(cls, dimension: int) -> "Forcing":
        return cls(None, (np.zeros(dimension),), dimension)

    @property
    def is_zero(self) -> bool:
        return self.expression is None or self.expression.is_zero

    def __call__(self, t: float) -> np.ndarray:
        if self.is_zero:
            return np.zeros(self.dimension)
        return self.expression(self.coords, t)


@dataclass(frozen=True)
class GrowthConstants:
    """Constants of the growth assumptions used by the audits and the step bound"""

    beta: float = 1.0
    c: float = 0.25
    c_tilde: float = 0.25
    nu: float = 0.5
    C1: Optional[float] = None
    C_hat: Optional[float] = None
    sigma: float = 1.0


Perturbation = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """The damped inertial system (E, Psi, B, f) over the norms U, V, W, H.

    lam is the convexity defect: E(u) <= E(v) + <xi, u - v> + |lam| ||u - v||_V^2
    for xi in the subdifferential at u.
    """

    energy: EnergyFunctional
    lam: float
    dissipation: DissipationSpec
    perturbation: Perturbation
    forcing: Forcing
    norms: NormFamily
    growth: GrowthConstants = field(default_factory=GrowthConstants)
    name: str = ""
    notes: Sequence[str] = ()

    @property
    def dimension(self) -> int:
        return self.norms.dimension

    @property
    def convexity_defect(self) -> float:
        return abs(self.lam)
