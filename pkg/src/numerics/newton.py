"""Damped Newton with Armijo backtracking for smooth convex minimisation."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize

from src.exceptions import DomainError

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class NewtonResult:
    x: np.ndarray
    value: float
    gradient_norm: float
    initial_gradient_norm: float
    iterations: int
    converged: bool
    unbounded: bool = False
    message: str = ""

    @property
    def relative_residual(self) -> float:
        return self.gradient_norm / (1.0 + self.initial_gradient_norm)


def _newton_direction(hessian: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve H d = -g, shifting H when it is not numerically positive definite"""
    scale = max(1.0, float(np.max(np.abs(np.diag(hessian)))))
    shift = 0.0
    for _ in range(8):
        try:
            factor = linalg.cho_factor(hessian + shift * np.eye(len(g)), lower=True, check_finite=False)
            d = -linalg.cho_solve(factor, g, check_finite=False)
            if np.all(np.isfinite(d)):
                return d
        except linalg.LinAlgError:
            pass
        shift = 1e-10 * scale if shift == 0.0 else 10.0 * shift
    logger.debug("Hessian not positive definite, falling back to steepest descent")
    return -g


def damped_newton(
    fun: Callable[[np.ndarray], float],
    grad: ArrayFn,
    hess: Optional[ArrayFn],
    x0: np.ndarray,
    tol: float,
    max_iters: int,
    divergence_radius: Optional[float] = None,
    c1: float = 1e-4,
    max_backtracks: int = 60,
) -> NewtonResult:
    """Minimise fun from x0 until ||grad|| <= tol * (1 + ||grad(x0)||).

    Without a Hessian the problem is handed to L-BFGS-B. The returned result
    always carries the best iterate seen, converged or not.
    """
    if hess is None:
        return _quasi_newton(fun, grad, x0, tol, max_iters)

    x = np.array(x0, dtype=float, copy=True)
    f = float(fun(x))
    if not np.isfinite(f):
        raise DomainError(f"objective is not finite at the starting point ({f})")
    g = grad(x)
    gnorm0 = float(np.linalg.norm(g))
    gnorm = gnorm0
    target = tol * (1.0 + gnorm0)

    for k in range(max_iters + 1):
        if gnorm <= target:
            return NewtonResult(x, f, gnorm, gnorm0, k, True)
        if divergence_radius is not None and np.linalg.norm(x) > divergence_radius:
            logger.debug(f"iterate norm {np.linalg.norm(x):.3e} beyond {divergence_radius:.1e}")
            return NewtonResult(x, f, gnorm, gnorm0, k, False, unbounded=True, message="unbounded below")
        if k == max_iters:
            break

        d = _newton_direction(hess(x), g)
        slope = float(g @ d)
        if slope >= 0.0:
            d = -g
            slope = -gnorm * gnorm

        alpha = 1.0
        accepted = False
        for _ in range(max_backtracks):
            trial = x + alpha * d
            f_trial = float(fun(trial))
            if np.isfinite(f_trial):
                if f_trial <= f + c1 * alpha * slope:
                    accepted = True
                else:
                    # near the roundoff floor the value stalls while the gradient still shrinks
                    g_trial = grad(trial)
                    accepted = f_trial <= f + 1e-12 * (1.0 + abs(f)) and \
                        np.linalg.norm(g_trial) <= (1.0 - c1 * alpha) * gnorm
            if accepted:
                break
            alpha *= 0.5
        if not accepted:
            return NewtonResult(x, f, gnorm, gnorm0, k, False, message="line search failed")

        x, f = trial, f_trial
        g = grad(x)
        gnorm = float(np.linalg.norm(g))
        logger.debug(f"newton iter {k + 1}: f={f:.16e} |g|={gnorm:.3e} alpha={alpha:.3e}")

    return NewtonResult(x, f, gnorm, gnorm0, max_iters, False, message="iteration limit reached")


def _quasi_newton(fun, grad, x0, tol, max_iters) -> NewtonResult:
    x0 = np.asarray(x0, dtype=float)
    f0 = float(fun(x0))
    if not np.isfinite(f0):
        raise DomainError(f"objective is not finite at the starting point ({f0})")
    gnorm0 = float(np.linalg.norm(grad(x0)))
    target = tol * (1.0 + gnorm0)
    if gnorm0 <= target:
        return NewtonResult(x0.copy(), f0, gnorm0, gnorm0, 0, True)
    res = optimize.minimize(
        fun, x0, jac=grad, method="L-BFGS-B",
        options={"gtol": target / np.sqrt(len(x0)), "ftol": 0.0, "maxiter": 50 * max_iters},
    )
    gnorm = float(np.linalg.norm(grad(res.x)))
    return NewtonResult(res.x, float(res.fun), gnorm, gnorm0, int(res.nit), gnorm <= target, message=str(res.message))
