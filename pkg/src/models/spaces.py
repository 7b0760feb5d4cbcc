"""Finite-dimensional realization of the space scale U, V, W, H.

One nodal coefficient space carries four norms. Dual vectors are coefficient
arrays against the nodal basis and the pairing is the plain dot product.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import linalg, optimize

from config.settings import settings
from src.exceptions import ContractViolation, IterationLimitError, NumericalError
from src.numerics.newton import damped_newton

logger = logging.getLogger(__name__)


class SpaceTag(str, Enum):
    U = "U"
    V = "V"
    W = "W"
    H = "H"


class DualTag(str, Enum):
    U_STAR = "U*"
    V_STAR = "V*"
    W_STAR = "W*"
    H = "H"


class GridSpec(BaseModel):
    """Uniform grid with homogeneous Dirichlet boundary"""

    model_config = ConfigDict(frozen=True)

    dimension: Literal[1, 2] = 1
    extent: Tuple[float, ...] = (1.0,)
    nodes: Tuple[int, ...] = (32,)
    boundary: Literal["dirichlet"] = "dirichlet"

    @field_validator("nodes")
    @classmethod
    def nodes_at_least_three(cls, v):
        if any(n < 3 for n in v):
            raise ValueError("every axis needs at least 3 nodes")
        return v

    @field_validator("extent")
    @classmethod
    def extent_positive(cls, v):
        if any(e <= 0 for e in v):
            raise ValueError("extent must be positive")
        return v

    @model_validator(mode="after")
    def axes_match_dimension(self):
        if len(self.extent) != self.dimension or len(self.nodes) != self.dimension:
            raise ValueError(f"extent and nodes need {self.dimension} entries")
        return self

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(e / (n - 1) for e, n in zip(self.extent, self.nodes))

    @property
    def interior_shape(self) -> Tuple[int, ...]:
        return tuple(n - 2 for n in self.nodes)

    @property
    def interior_count(self) -> int:
        return int(np.prod(self.interior_shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def interior_coordinates(self) -> Tuple[np.ndarray, ...]:
        """Flattened coordinates of interior nodes, last axis fastest"""
        axes = [np.arange(1, n - 1) * h for n, h in zip(self.nodes, self.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return tuple(m.ravel() for m in mesh)


@dataclass(frozen=True, eq=False)
class StateVec:
    """Nodal values of a state (u or v) over the interior nodes"""

    values: np.ndarray
    grid: Optional[GridSpec] = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).reshape(-1)
        if self.grid is not None and arr.size != self.grid.interior_count:
            raise ContractViolation(
                f"expected {self.grid.interior_count} interior values, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ContractViolation("state contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def zeros(cls, dim: int, grid: Optional[GridSpec] = None) -> "StateVec":
        return cls(np.zeros(dim), grid)


@dataclass(frozen=True, eq=False)
class DualVec(StateVec):
    """Functional coefficients against the nodal basis"""


VecLike = Union[StateVec, np.ndarray]


def pairing(xi: VecLike, x: VecLike) -> float:
    return float(np.dot(np.asarray(xi, dtype=float), np.asarray(x, dtype=float)))


def conjugate_exponent(r: float) -> float:
    return r / (r - 1.0)


def _check_symmetric_pd(name: str, G: np.ndarray) -> None:
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ContractViolation(f"{name} must be square, got shape {G.shape}")
    scale = max(1.0, float(np.max(np.abs(G))))
    if not np.allclose(G, G.T, rtol=0.0, atol=1e-12 * scale):
        raise ContractViolation(f"{name} is not symmetric")
    smallest = float(linalg.eigvalsh(G, subset_by_index=[0, 0])[0])
    if smallest <= 0.0:
        raise NumericalError(f"{name} is not positive definite (smallest eigenvalue {smallest:.3e})",
                             condition=float(np.linalg.cond(G)))


@dataclass(frozen=True, eq=False)
class NormFamily:
    """Norms of U, V, W, H on one coefficient space.

    gram_H, gram_V: Gram matrices of the Hilbert spaces H and V.
    w_weights, w_exponent: ||x||_W = (sum w_i |x_i|^r)^(1/r).
    u_operator, u_weights, u_exponent: ||x||_U = (sum a_k |(L x)_k|^p)^(1/p).
    """

    gram_H: np.ndarray
    gram_V: np.ndarray
    w_weights: np.ndarray
    w_exponent: float
    u_operator: np.ndarray
    u_weights: np.ndarray
    u_exponent: float
    grid: Optional[GridSpec] = None
    embedding_order: Literal["standard", "chain"] = "standard"

    def __post_init__(self):
        for name in ("gram_H", "gram_V", "w_weights", "u_operator", "u_weights"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        _check_symmetric_pd("gram_H", self.gram_H)
        _check_symmetric_pd("gram_V", self.gram_V)
        n = self.dimension
        if self.gram_V.shape != (n, n) or self.w_weights.shape != (n,) or self.u_operator.shape[1] != n:
            raise ContractViolation("norm data do not share one dimension")
        if self.w_exponent <= 1.0:
            raise ContractViolation(f"W exponent must exceed 1, got {self.w_exponent}")
        if self.u_exponent < 1.0:
            raise ContractViolation(f"U exponent must be at least 1, got {self.u_exponent}")
        if np.any(self.w_weights <= 0) or np.any(self.u_weights <= 0):
            raise ContractViolation("quadrature weights must be positive")

    @classmethod
    def euclidean(cls, dim: int) -> "NormFamily":
        eye = np.eye(dim)
        return cls(eye, eye, np.ones(dim), 2.0, eye, np.ones(dim), 2.0)

    @property
    def dimension(self) -> int:
        return self.gram_H.shape[0]

    @cached_property
    def _factor_H(self):
        return linalg.cho_factor(self.gram_H, lower=True)

    @cached_property
    def _factor_V(self):
        return linalg.cho_factor(self.gram_V, lower=True)

    @cached_property
    def gram_U2(self) -> np.ndarray:
        """Gram matrix of the Hilbert norm with the U operator and weights"""
        L = self.u_operator
        return L.T @ (self.u_weights[:, None] * L)

    @cached_property
    def _factor_U2(self):
        return linalg.cho_factor(self.gram_U2, lower=True)

    def _coeffs(self, x: VecLike) -> np.ndarray:
        if isinstance(x, StateVec) and x.grid is not None and self.grid is not None and x.grid != self.grid:
            raise ContractViolation("vector lives on a different grid")
        arr = np.asarray(x, dtype=float)
        if arr.shape != (self.dimension,):
            raise ContractViolation(f"expected a vector of length {self.dimension}, got shape {arr.shape}")
        return arr

    def state(self, values: np.ndarray) -> StateVec:
        return StateVec(values, self.grid)

    def dual(self, values: np.ndarray) -> DualVec:
        return DualVec(values, self.grid)

    def riesz_h(self, x: VecLike) -> DualVec:
        """The functional (x, .)_H"""
        return self.dual(self.gram_H @ self._coeffs(x))

    def inner(self, which: Union[SpaceTag, str], x: VecLike, y: VecLike) -> float:
        G = {SpaceTag.H: self.gram_H, SpaceTag.V: self.gram_V}.get(SpaceTag(which))
        if G is None:
            raise ContractViolation(f"no inner product on {which}")
        return float(self._coeffs(x) @ G @ self._coeffs(y))

    def norm(self, which: Union[SpaceTag, str], x: VecLike) -> float:
        which = SpaceTag(which)
        a = self._coeffs(x)
        if which is SpaceTag.H:
            return float(np.sqrt(max(a @ self.gram_H @ a, 0.0)))
        if which is SpaceTag.V:
            return float(np.sqrt(max(a @ self.gram_V @ a, 0.0)))
        if which is SpaceTag.W:
            r = self.w_exponent
            return float(np.sum(self.w_weights * np.abs(a) ** r) ** (1.0 / r))
        p = self.u_exponent
        return float(np.sum(self.u_weights * np.abs(self.u_operator @ a) ** p) ** (1.0 / p))

    def dual_norm(self, which: Union[DualTag, str], xi: VecLike) -> float:
        which = DualTag(which)
        b = self._coeffs(xi)
        if not np.any(b):
            return 0.0
        if which is DualTag.H:
            return float(np.sqrt(max(b @ linalg.cho_solve(self._factor_H, b), 0.0)))
        if which is DualTag.V_STAR:
            return float(np.sqrt(max(b @ linalg.cho_solve(self._factor_V, b), 0.0)))
        if which is DualTag.W_STAR:
            rp = conjugate_exponent(self.w_exponent)
            return float(np.sum(self.w_weights ** (1.0 - rp) * np.abs(b) ** rp) ** (1.0 / rp))
        return self._u_dual_norm(b)

    def _u_dual_norm(self, b: np.ndarray) -> float:
        if self.u_exponent == 2.0:
            return float(np.sqrt(max(b @ linalg.cho_solve(self._factor_U2, b), 0.0)))

        # ||xi||_{U*} from the conjugate of F = (1/p)||.||_U^p, F*(xi) = (1/p')||xi||_{U*}^p'
        p = self.u_exponent
        L, a = self.u_operator, self.u_weights
        scale = float(np.max(np.abs(b)))
        c = b / scale

        def fun(x):
            return float(np.sum(a * np.abs(L @ x) ** p) / p - c @ x)

        def grad(x):
            z = L @ x
            return L.T @ (a * np.abs(z) ** (p - 2.0) * z) - c

        def hess(x):
            z = L @ x
            return L.T @ ((a * (p - 1.0) * np.abs(z) ** (p - 2.0))[:, None] * L)

        y = linalg.cho_solve(self._factor_U2, c)
        fy = float(np.sum(a * np.abs(L @ y) ** p) / p)
        x0 = y * (max(c @ y, 0.0) / (p * fy)) ** (1.0 / (p - 1.0)) if fy > 0 else y
        res = damped_newton(fun, grad, hess, x0, settings.conjugate_tol, settings.conjugate_max_iters)
        if not res.converged:
            raise IterationLimitError(f"U* dual norm did not converge: {res.message}", best=res.x,
                                      residual=res.relative_residual)
        pp = conjugate_exponent(p)
        return scale * float((pp * max(-res.value, 0.0)) ** (1.0 / pp))

    def sum_dual_norm(self, xi: VecLike, tol: Optional[float] = None) -> float:
        """inf over xi = xi1 + xi2 of max(||xi1||_{V*}, ||xi2||_{W*})"""
        tol = settings.conjugate_tol if tol is None else tol
        if tol <= 0:
            raise ContractViolation("tol must be positive")
        b = self._coeffs(xi)
        scale = float(np.max(np.abs(b)))
        if scale == 0.0:
            return 0.0
        c = b / scale
        n = self.dimension
        rp = conjugate_exponent(self.w_exponent)
        wpow = self.w_weights ** (1.0 - rp)
        GVinv = linalg.cho_solve(self._factor_V, np.eye(n))

        def v_sq(x1):
            return float(x1 @ GVinv @ x1)

        def w_pow(x2):
            return float(np.sum(wpow * np.abs(x2) ** rp))

        # epigraph form: minimise s with s^2 >= ||xi1||_{V*}^2 and s^r' >= ||xi - xi1||_{W*}^r'
        constraints = [
            {"type": "ineq",
             "fun": lambda z: z[-1] ** 2 - v_sq(z[:-1]),
             "jac": lambda z: np.concatenate([-2.0 * GVinv @ z[:-1], [2.0 * z[-1]]])},
            {"type": "ineq",
             "fun": lambda z: abs(z[-1]) ** rp - w_pow(c - z[:-1]),
             "jac": lambda z: np.concatenate([
                 rp * wpow * np.abs(c - z[:-1]) ** (rp - 1.0) * np.sign(c - z[:-1]),
                 [rp * abs(z[-1]) ** (rp - 1.0) * np.sign(z[-1])]])},
        ]
        half = 0.5 * c
        s0 = max(np.sqrt(v_sq(half)), w_pow(c - half) ** (1.0 / rp))
        res = optimize.minimize(
            lambda z: z[-1], np.concatenate([half, [s0]]),
            jac=lambda z: np.concatenate([np.zeros(n), [1.0]]),
            method="SLSQP", constraints=constraints,
            options={"ftol": tol, "maxiter": settings.conjugate_max_iters},
        )
        if not res.success:
            raise IterationLimitError(f"sum-space dual norm split did not converge: {res.message}",
                                      best=res.x[:-1] * scale)
        x1 = res.x[:-1]
        value = max(np.sqrt(v_sq(x1)), w_pow(c - x1) ** (1.0 / rp))
        trivial = min(np.sqrt(v_sq(c)), w_pow(c) ** (1.0 / rp))
        return scale * float(min(value, trivial))

    def embedding_constant(self, source: Union[SpaceTag, str], target: Union[SpaceTag, str],
                           samples: int = 200, seed: int = 0) -> float:
        """Smallest C with ||x||_target <= C ||x||_source (exact for Hilbert pairs)"""
        source, target = SpaceTag(source), SpaceTag(target)
        hilbert = {SpaceTag.H: self.gram_H, SpaceTag.V: self.gram_V}
        if self.w_exponent == 2.0:
            hilbert[SpaceTag.W] = np.diag(self.w_weights)
        if self.u_exponent == 2.0:
            hilbert[SpaceTag.U] = self.gram_U2
        if source in hilbert and target in hilbert:
            top = linalg.eigh(hilbert[target], hilbert[source], eigvals_only=True)[-1]
            return float(np.sqrt(top))

        rng = np.random.default_rng(seed)
        probes = np.vstack([np.eye(self.dimension), rng.standard_normal((samples, self.dimension))])
        return float(max(self.norm(target, x) / self.norm(source, x) for x in probes))

    def embedding_report(self) -> Dict[str, float]:
        """Measured constants along the configured embedding order"""
        if self.embedding_order == "chain":
            pairs = [("U", "W"), ("W", "V"), ("V", "H")]
        else:
            pairs = [("U", "V"), ("V", "H"), ("W", "H")]
        return {f"C_{s}{t}": self.embedding_constant(s, t) for s, t in pairs}
