import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize

from src.exceptions import DomainError, StepFailure
from src.models.config import SolverConfig
from src.models.records import StepRecord, Trajectory
from src.models.spaces import DualVec, StateVec, VecLike
from src.models.system import SystemSpec
from src.numerics.newton import damped_newton
from src.services.convex_service import convex_service

logger = logging.getLogger(__name__)

_GAUSS_NODES, _GAUSS_WEIGHTS = leggauss(3)


@dataclass(frozen=True)
class IncrementResult:
    u: StateVec
    value: float
    start_value: float
    residual: float
    iterations: int


def _arr(x: VecLike) -> np.ndarray:
    return np.asarray(x, dtype=float)


class StepperService:
    """Semi-implicit variational time stepping"""

    def __init__(self):
        self.convex = convex_service

    def incremental_value(self, system: SystemSpec, r: float, t: float, v: VecLike, w: VecLike,
                          eta: VecLike, u: VecLike) -> float:
        """Phi(r,t,v,w,eta;u) = |u-2v+w|_H^2/(2r^2) + r Psi((u-v)/r) + E(t+r,u) - <eta,u>"""
        u, v, w, eta = _arr(u), _arr(v), _arr(w), _arr(eta)
        a = u - 2.0 * v + w
        inertia = float(a @ system.norms.gram_H @ a) / (2.0 * r * r)
        dissipation = r * self.convex.psi_eval(system.dissipation, (u - v) / r)
        return inertia + dissipation + system.energy.value(t + r, u) - float(eta @ u)

    def incremental_gradient(self, system: SystemSpec, r: float, t: float, v: VecLike, w: VecLike,
                             eta: VecLike, u: VecLike) -> DualVec:
        u, v, w, eta = _arr(u), _arr(v), _arr(w), _arr(eta)
        g = system.norms.gram_H @ (u - 2.0 * v + w) / (r * r)
        g = g + self.convex.psi_grad(system.dissipation, (u - v) / r).values
        g = g + system.energy.gradient(t + r, u) - eta
        return system.norms.dual(g)

    def incremental_hessian(self, system: SystemSpec, r: float, t: float, v: VecLike,
                            u: VecLike) -> Optional[np.ndarray]:
        u, v = _arr(u), _arr(v)
        psi_h = self.convex.psi_hessian(system.dissipation, (u - v) / r)
        if psi_h is None or not hasattr(system.energy, "hessian"):
            return None
        return system.norms.gram_H / (r * r) + psi_h / r + system.energy.hessian(t + r, u)

    def minimize_increment(self, system: SystemSpec, r: float, t: float, v: VecLike, w: VecLike,
                           eta: VecLike, warm_start: VecLike, config: SolverConfig,
                           step: int = 0) -> IncrementResult:
        """Minimise Phi from warm_start until the relative gradient norm is below inner_tol"""
        v, w, eta = _arr(v), _arr(w), _arr(eta)
        x0 = _arr(warm_start)
        if not np.all(np.isfinite(x0)):
            raise DomainError("warm start is not finite")

        def fun(u):
            return self.incremental_value(system, r, t, v, w, eta, u)

        def grad(u):
            return self.incremental_gradient(system, r, t, v, w, eta, u).values

        hess = None
        if self.incremental_hessian(system, r, t, v, x0) is not None:
            hess = lambda u: self.incremental_hessian(system, r, t, v, u)  # noqa: E731

        start_value = fun(x0)
        result = damped_newton(fun, grad, hess, x0, config.inner_tol, config.inner_max_iters)
        if not result.converged:
            logger.error(f"inner solve failed at step {step}: {result.message}, "
                         f"residual {result.relative_residual:.3e}")
            raise StepFailure(result.message or "inner solve did not converge", step=step,
                              best=result.x, residual=result.relative_residual)
        return IncrementResult(
            u=system.norms.state(result.x),
            value=result.value,
            start_value=start_value,
            residual=result.relative_residual,
            iterations=result.iterations,
        )

    def moreau_yosida(self, system: SystemSpec, r: float, t: float, v: VecLike, w: VecLike,
                      eta: VecLike, warm_start: Optional[VecLike] = None, tol: float = 1e-12) -> float:
        """Minimum value of Phi through L-BFGS-B, independent of the Newton path"""
        v, w, eta = _arr(v), _arr(w), _arr(eta)
        x0 = v if warm_start is None else _arr(warm_start)
        res = optimize.minimize(
            lambda u: self.incremental_value(system, r, t, v, w, eta, u),
            x0,
            jac=lambda u: self.incremental_gradient(system, r, t, v, w, eta, u).values,
            method="L-BFGS-B",
            options={"gtol": tol, "ftol": 0.0, "maxiter": 20000},
        )
        return float(res.fun)

    def average_force(self, system: SystemSpec, n: int, tau: float) -> StateVec:
        """(1/tau) integral of f over [t_{n-1}, t_n] by 3-point Gauss quadrature"""
        if n < 1:
            raise ValueError("n must be at least 1")
        if system.forcing.is_zero:
            return system.norms.state(np.zeros(system.dimension))
        mid = (n - 0.5) * tau
        total = sum(wk * system.forcing(mid + 0.5 * tau * xk) for xk, wk in zip(_GAUSS_NODES, _GAUSS_WEIGHTS))
        return system.norms.state(0.5 * total)

    def recover_subgradient(self, record_n: StepRecord, record_prev: StepRecord, system: SystemSpec,
                            tau: float) -> DualVec:
        """xi^n = f^n - B^n - (V^n - V^{n-1})/tau - D Psi(V^n), all as functionals"""
        G_H = system.norms.gram_H
        acceleration = G_H @ (record_n.V.values - record_prev.V.values) / tau
        xi = G_H @ record_n.f.values - record_n.B.values - acceleration
        xi = xi - self.convex.psi_grad(system.dissipation, record_n.V).values
        return system.norms.dual(xi)

    def estimate_tau_star(self, system: SystemSpec) -> float:
        """min{2 mu (1 - c - c~) / |lambda|, 1}; infinite for a convex energy"""
        lam = system.convexity_defect
        if lam == 0.0:
            return float("inf")
        g = system.growth
        return min(2.0 * system.dissipation.mu * (1.0 - g.c - g.c_tilde) / lam, 1.0)

    def run(self, system: SystemSpec, u0: VecLike, v0: VecLike, config: SolverConfig) -> Trajectory:
        """Produce U^0..U^N from U^0 = u0, U^{-1} = u0 - tau v0 with B taken at the previous step"""
        N = max(1, int(round(config.T / config.tau)))
        tau = config.T / N
        norms = system.norms
        U0, V0 = norms.state(_arr(u0)), norms.state(_arr(v0))
        E0 = system.energy.value(0.0, U0.values)
        if not np.isfinite(E0):
            raise DomainError(f"initial energy is not finite ({E0})")

        trajectory = Trajectory(records=[], u0=U0, v0=V0, tau=tau, requested_tau=config.tau, T=config.T,
                                system=system, config=config)
        if tau != config.tau:
            logger.info(f"tau snapped from {config.tau!r} to {tau!r} ({N} steps)")
        if config.tau_star_guard:
            tau_star = self.estimate_tau_star(system)
            if tau >= tau_star:
                message = f"tau = {tau!r} is not below the estimated tau* = {tau_star!r}"
                logger.warning(message)
                trajectory.warnings.append(message)

        zero = norms.dual(np.zeros(system.dimension))
        psi0 = self.convex.psi_grad(system.dissipation, V0)
        trajectory.records.append(StepRecord(
            n=0, t=0.0, U=U0, V=V0,
            xi=norms.dual(system.energy.gradient(0.0, U0.values)),
            f=norms.state(system.forcing(0.0)), B=zero, zeta=psi0,
            psi_value=self.convex.psi_eval(system.dissipation, V0),
            energy_value=E0,
        ))

        logger.info(f"running {system.name or 'system'}: N={N}, tau={tau!r}, dim={system.dimension}")
        U_prev2 = U0.values - tau * V0.values
        for n in range(1, N + 1):
            prev = trajectory.records[-1]
            t_prev, t_n = (n - 1) * tau, n * tau
            f_n = self.average_force(system, n, tau)
            B_n = norms.dual(system.perturbation(t_n, prev.U.values, prev.V.values))
            eta = norms.gram_H @ f_n.values - B_n.values

            try:
                step = self.minimize_increment(system, tau, t_prev, prev.U.values, U_prev2, eta,
                                               prev.U.values, config, step=n)
            except StepFailure as e:
                e.trajectory = trajectory
                raise

            U_n = step.u
            V_n = norms.state((U_n.values - prev.U.values) / tau)
            draft = StepRecord(n=n, t=t_n, U=U_n, V=V_n, xi=zero, f=f_n, B=B_n, zeta=zero)
            xi = self.recover_subgradient(draft, prev, system, tau)

            zeta = norms.gram_H @ f_n.values - B_n.values \
                - norms.gram_H @ (V_n.values - prev.V.values) / tau - xi.values
            psi = self.convex.psi_eval(system.dissipation, V_n)
            psi_star = self.convex.psi_star(system.dissipation, zeta, warm_start=V_n.values).value
            fy_gap = psi + psi_star - float(zeta @ V_n.values)

            start_scale = norms.dual_norm(
                "V*", self.incremental_gradient(system, tau, t_prev, prev.U.values, U_prev2, eta, prev.U))
            xi_residual = norms.dual_norm("V*", xi.values - system.energy.gradient(t_n, U_n.values))

            trajectory.records.append(replace(
                draft,
                xi=xi,
                zeta=norms.dual(zeta),
                psi_value=psi,
                psi_star_value=psi_star,
                energy_value=system.energy.value(t_n, U_n.values),
                inner_iterations=step.iterations,
                optimality_residual=step.residual,
                xi_residual=xi_residual / (1.0 + start_scale),
                fy_gap=fy_gap,
            ))
            logger.debug(f"step {n}: t={t_n:.6g} iters={step.iterations} residual={step.residual:.2e} "
                         f"fy_gap={fy_gap:.2e}")
            U_prev2 = prev.U.values

        logger.info(f"run finished: {N} steps, max inner iterations "
                    f"{max(r.inner_iterations for r in trajectory.records)}")
        return trajectory


stepper_service = StepperService()
