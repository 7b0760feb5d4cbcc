"""Stored energies E_t(u) assembled from discrete terms."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Protocol, Tuple

import numpy as np
from scipy import sparse

from src.numerics.stencils import GradientStencil


class EnergyTerm(Protocol):
    def value(self, u: np.ndarray) -> float: ...

    def gradient(self, u: np.ndarray) -> np.ndarray: ...

    def hessian(self, u: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class QuadraticTerm:
    """(c/2) <M u, u>"""

    matrix: np.ndarray
    coefficient: float = 1.0

    def value(self, u):
        return 0.5 * self.coefficient * float(u @ self.matrix @ u)

    def gradient(self, u):
        return self.coefficient * (self.matrix @ u)

    def hessian(self, u):
        return self.coefficient * self.matrix


@dataclass(frozen=True, eq=False)
class PLaplaceTerm:
    """(1/p) sum_c w_c |grad u|_c^p with gradients on cell midpoints"""

    stencil: GradientStencil
    p: float

    def value(self, u):
        return self.stencil.p_energy(u, self.p)

    def gradient(self, u):
        return self.stencil.p_gradient(u, self.p)

    def hessian(self, u):
        return self.stencil.p_hessian(u, self.p)


@dataclass(frozen=True, eq=False)
class DoubleWellTerm:
    """sum_i w_i (u_i^2 - 1)^2 / 4 plus the boundary-node share of the constant"""

    weights: np.ndarray
    constant: float = 0.0

    def value(self, u):
        return float(0.25 * np.sum(self.weights * (u * u - 1.0) ** 2)) + self.constant

    def gradient(self, u):
        return self.weights * (u * u - 1.0) * u

    def hessian(self, u):
        return np.diag(self.weights * (3.0 * u * u - 1.0))


@dataclass(frozen=True, eq=False)
class GradientPotentialTerm:
    """sum_e w_e phi((E u)_e) for a scalar stored-energy density phi"""

    stencil: GradientStencil
    potential: Literal["linear", "double_well"] = "linear"

    def phi(self, F):
        if self.potential == "linear":
            return 0.5 * F * F
        return 0.25 * (F * F - 1.0) ** 2

    def sigma(self, F):
        if self.potential == "linear":
            return F
        return (F * F - 1.0) * F

    def dsigma(self, F):
        if self.potential == "linear":
            return np.ones_like(F)
        return 3.0 * F * F - 1.0

    @property
    def andrews_ball(self) -> float:
        """Smallest lambda with (sigma(F) - sigma(G))(F - G) >= -lambda |F - G|^2"""
        return 0.0 if self.potential == "linear" else 1.0

    def value(self, u):
        return float(self.stencil.edge_weights @ self.phi(self.stencil.E @ u))

    def gradient(self, u):
        return self.stencil.E.T @ (self.stencil.edge_weights * self.sigma(self.stencil.E @ u))

    def hessian(self, u):
        E = self.stencil.E
        d = self.stencil.edge_weights * self.dsigma(E @ u)
        return np.asarray((E.T @ sparse.diags(d) @ E).todense())


@dataclass(frozen=True, eq=False)
class EnergyFunctional:
    """E_t(u) = m(t) sum_k E_k(u) + offset with m(t) = 1 + a sin(omega t)"""

    terms: Tuple[EnergyTerm, ...]
    offset: float = 0.0
    modulation_amplitude: float = 0.0
    modulation_frequency: float = 1.0

    def _m(self, t: float) -> float:
        return 1.0 + self.modulation_amplitude * np.sin(self.modulation_frequency * t)

    def _dm(self, t: float) -> float:
        return self.modulation_amplitude * self.modulation_frequency * np.cos(self.modulation_frequency * t)

    @property
    def is_time_dependent(self) -> bool:
        return self.modulation_amplitude != 0.0

    @property
    def power_constant(self) -> float:
        """C_1 with |d_t E_t(u)| <= C_1 E_t(u) for a nonnegative stationary part"""
        a = self.modulation_amplitude
        return a * self.modulation_frequency / (1.0 - a)

    def stationary_value(self, u: np.ndarray) -> float:
        return float(sum(term.value(u) for term in self.terms))

    def value(self, t: float, u: np.ndarray) -> float:
        return self._m(t) * self.stationary_value(u) + self.offset

    def gradient(self, t: float, u: np.ndarray) -> np.ndarray:
        return self._m(t) * sum(term.gradient(u) for term in self.terms)

    def time_derivative(self, t: float, u: np.ndarray) -> float:
        if not self.is_time_dependent:
            return 0.0
        return self._dm(t) * self.stationary_value(u)

    def hessian(self, t: float, u: np.ndarray) -> np.ndarray:
        return self._m(t) * sum(term.hessian(u) for term in self.terms)

    def shifted(self, c: float) -> "EnergyFunctional":
        return replace(self, offset=self.offset + c)
