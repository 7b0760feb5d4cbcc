from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal, NamedTuple, Optional, Union

import numpy as np
from scipy import linalg

from src.exceptions import ContractViolation, NumericalError
from src.models.spaces import conjugate_exponent


@dataclass(frozen=True, eq=False)
class SmoothFunctional:
    """A convex functional given by value, gradient and optionally Hessian"""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x) -> float:
        return self.value(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class PowerLaw:
    """Psi_2(v) = (kappa/r) sum_i w_i |v_i|^r, the r-th power of an L^r-type norm"""

    exponent: float
    weights: np.ndarray
    coefficient: float = 1.0

    def __post_init__(self):
        if self.exponent <= 1.0:
            raise ContractViolation(f"power-law exponent must exceed 1, got {self.exponent}")
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @property
    def holder_exponent(self) -> float:
        """Hoelder exponent of the gradient map"""
        return min(self.exponent - 1.0, 1.0)

    @property
    def growth_constant(self) -> float:
        """C_R with ||D Psi_2(v)||_{W*} <= C_R ||v||_W^(r-1)"""
        return self.coefficient

    def value(self, v: np.ndarray) -> float:
        return float(self.coefficient / self.exponent * np.sum(self.weights * np.abs(v) ** self.exponent))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        r = self.exponent
        return self.coefficient * self.weights * np.sign(v) * np.abs(v) ** (r - 1.0)

    def hessian(self, v: np.ndarray) -> np.ndarray:
        r = self.exponent
        if r < 2.0:
            # unbounded curvature at v_i = 0
            return self.coefficient * (r - 1.0) * np.diag(self.weights * np.maximum(np.abs(v), 1e-12) ** (r - 2.0))
        return self.coefficient * (r - 1.0) * np.diag(self.weights * np.abs(v) ** (r - 2.0))

    def conjugate(self, xi: np.ndarray) -> float:
        rp = conjugate_exponent(self.exponent)
        kw = self.coefficient * self.weights
        return float(np.sum(np.abs(xi) ** rp * kw ** (1.0 - rp)) / rp)

    def conjugate_gradient(self, xi: np.ndarray) -> np.ndarray:
        rp = conjugate_exponent(self.exponent)
        kw = self.coefficient * self.weights
        return np.sign(xi) * np.abs(xi) ** (rp - 1.0) * kw ** (1.0 - rp)


Psi2 = Union[PowerLaw, SmoothFunctional]


@dataclass(frozen=True, eq=False)
class DissipationSpec:
    """Psi = Psi_1 + Psi_2 with Psi_1(v) = (1/2)<Av, v>.

    mu is the strong-positivity constant of A relative to the V Gram matrix
    (identity when none is given).
    """

    A: np.ndarray
    psi2: Optional[Psi2] = None
    mode: Literal["a", "b"] = "a"
    gram_V: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "A", A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ContractViolation(f"A must be square, got shape {A.shape}")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(A))))):
            raise ContractViolation("A is not symmetric")
        if self.mode == "a" and self.psi2 is not None:
            raise ContractViolation("mode a takes no power-law part")
        if self.mode == "b" and self.psi2 is None:
            raise ContractViolation("mode b needs a power-law part")
        if self.mu <= 0.0:
            raise ContractViolation(f"A is not strongly positive (mu = {self.mu:.3e})")
        if self.psi2 is not None and self.psi2.value(np.zeros(self.dimension)) != 0.0:
            raise ContractViolation("Psi_2(0) must vanish")

    @property
    def dimension(self) -> int:
        return self.A.shape[0]

    @cached_property
    def mu(self) -> float:
        G = np.eye(self.dimension) if self.gram_V is None else self.gram_V
        return float(linalg.eigh(self.A, G, eigvals_only=True)[0])

    @cached_property
    def mu_max(self) -> float:
        G = np.eye(self.dimension) if self.gram_V is None else self.gram_V
        return float(linalg.eigh(self.A, G, eigvals_only=True)[-1])

    @cached_property
    def factor(self):
        try:
            return linalg.cho_factor(self.A, lower=True)
        except linalg.LinAlgError as e:
            raise NumericalError(f"Cholesky factorisation of A failed: {e}",
                                 condition=float(np.linalg.cond(self.A))) from e


@dataclass(frozen=True)
class ConjugateResult:
    """value is +inf only for an unbounded supremum"""

    value: float
    witness: Optional[np.ndarray] = None
    iterations: int = 0
    gap_estimate: float = 0.0
    unbounded: bool = False


class FenchelYoungGap(NamedTuple):
    gap: float
    raw: float


class SubgradientCheck(NamedTuple):
    passed: bool
    worst_slack: float
    worst_probe: Optional[np.ndarray]
