import logging
from typing import Callable, Iterable, Optional, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from config.settings import settings
from src.exceptions import ContractViolation, IterationLimitError
from src.models.convex import (
    ConjugateResult,
    DissipationSpec,
    FenchelYoungGap,
    PowerLaw,
    SmoothFunctional,
    SubgradientCheck,
)
from src.models.spaces import DualVec, StateVec, VecLike, pairing
from src.numerics.newton import damped_newton

logger = logging.getLogger(__name__)

Functional = Union[SmoothFunctional, Callable[[np.ndarray], float]]


def _arr(x: VecLike) -> np.ndarray:
    return np.asarray(x, dtype=float)


class ConvexService:
    """Dissipation potentials, conjugates, splits and convexity probes"""

    def __init__(self):
        self.tol = settings.conjugate_tol
        self.max_iters = settings.conjugate_max_iters
        self.unbounded_threshold = settings.unbounded_threshold

    def _check(self, spec: DissipationSpec, x: VecLike) -> np.ndarray:
        a = _arr(x)
        if a.shape != (spec.dimension,):
            raise ContractViolation(f"expected a vector of length {spec.dimension}, got shape {a.shape}")
        return a

    def psi_eval(self, spec: DissipationSpec, v: VecLike) -> float:
        a = self._check(spec, v)
        value = 0.5 * float(a @ spec.A @ a)
        if spec.psi2 is not None:
            value += spec.psi2.value(a)
        return value

    def psi_grad(self, spec: DissipationSpec, v: VecLike) -> DualVec:
        a = self._check(spec, v)
        g = spec.A @ a
        if spec.psi2 is not None:
            g = g + spec.psi2.gradient(a)
        return DualVec(g, getattr(v, "grid", None))

    def psi_hessian(self, spec: DissipationSpec, v: VecLike) -> Optional[np.ndarray]:
        """None when the power-law part supplies no Hessian"""
        a = self._check(spec, v)
        if spec.psi2 is None:
            return spec.A
        if spec.psi2.hessian is None:
            return None
        return spec.A + spec.psi2.hessian(a)

    def as_functional(self, spec: DissipationSpec) -> SmoothFunctional:
        hess = None
        if spec.psi2 is None or spec.psi2.hessian is not None:
            hess = lambda v: self.psi_hessian(spec, v)  # noqa: E731
        return SmoothFunctional(
            value=lambda v: self.psi_eval(spec, v),
            gradient=lambda v: self.psi_grad(spec, v).values,
            hessian=hess,
        )

    def psi1_conjugate(self, spec: DissipationSpec, xi: VecLike) -> ConjugateResult:
        """(1/2)<xi, A^{-1} xi> by a Cholesky solve"""
        b = self._check(spec, xi)
        witness = linalg.cho_solve(spec.factor, b)
        return ConjugateResult(value=0.5 * float(b @ witness), witness=witness)

    def psi2_conjugate(self, spec: DissipationSpec, xi: VecLike) -> ConjugateResult:
        b = self._check(spec, xi)
        if not isinstance(spec.psi2, PowerLaw):
            raise ContractViolation("closed-form Psi_2 conjugate needs a power-law part")
        return ConjugateResult(value=spec.psi2.conjugate(b), witness=spec.psi2.conjugate_gradient(b))

    def psi_star(self, spec: DissipationSpec, xi: VecLike, warm_start: Optional[VecLike] = None,
                 tol: Optional[float] = None) -> ConjugateResult:
        """Psi*(xi): closed form in mode a, numerical supremum in mode b"""
        if spec.mode == "a":
            return self.psi1_conjugate(spec, xi)
        return self.conjugate_numeric(self.as_functional(spec), xi, tol=tol, x0=warm_start)

    def conjugate_numeric(self, F: SmoothFunctional, xi: VecLike, tol: Optional[float] = None,
                          x0: Optional[VecLike] = None) -> ConjugateResult:
        """sup_u <xi, u> - F(u) by minimising F(u) - <xi, u>"""
        tol = self.tol if tol is None else tol
        if tol <= 0:
            raise ContractViolation("tol must be positive")
        b = _arr(xi)
        start = np.zeros_like(b) if x0 is None else np.array(_arr(x0), dtype=float)

        result = damped_newton(
            lambda u: F.value(u) - b @ u,
            lambda u: F.gradient(u) - b,
            None if F.hessian is None else F.hessian,
            start, tol, self.max_iters,
            divergence_radius=self.unbounded_threshold,
        )
        if result.unbounded:
            logger.info(f"conjugate supremum unbounded (|u| > {self.unbounded_threshold:.1e})")
            return ConjugateResult(value=float("inf"), witness=result.x, iterations=result.iterations,
                                   gap_estimate=float("inf"), unbounded=True)
        if not result.converged:
            logger.error(f"conjugate maximisation failed after {result.iterations} iterations: {result.message}")
            raise IterationLimitError(f"conjugate did not converge: {result.message}", best=result.x,
                                      residual=result.relative_residual)

        # Newton decrement bound on the remaining suboptimality
        g = F.gradient(result.x) - b
        gap = float(np.linalg.norm(g)) * float(np.linalg.norm(result.x) + 1.0)
        if F.hessian is not None:
            try:
                gap = 0.5 * float(g @ linalg.solve(F.hessian(result.x), g, assume_a="pos"))
            except (linalg.LinAlgError, ValueError):
                pass
        return ConjugateResult(value=-result.value, witness=result.x, iterations=result.iterations,
                               gap_estimate=abs(gap))

    def infimal_convolution_conjugate(self, F1_star: Functional, F2_star: Functional, xi: VecLike,
                                      tol: Optional[float] = None) -> ConjugateResult:
        """(F1 + F2)*(xi) = min over eta of F1*(xi - eta) + F2*(eta)"""
        tol = self.tol if tol is None else tol
        if tol <= 0:
            raise ContractViolation("tol must be positive")
        b = _arr(xi)

        def objective(eta):
            value = float(F1_star(b - eta)) + float(F2_star(eta))
            return value if np.isfinite(value) else np.inf

        candidates = [np.zeros_like(b), 0.5 * b, b.copy()]
        values = [objective(c) for c in candidates]
        start = candidates[int(np.argmin(values))]
        if not np.isfinite(min(values)):
            raise ContractViolation("no finite split among the starting candidates")

        smooth = isinstance(F1_star, SmoothFunctional) and isinstance(F2_star, SmoothFunctional)
        if smooth:
            res = optimize.minimize(
                objective, start, method="L-BFGS-B",
                jac=lambda eta: F2_star.gradient(eta) - F1_star.gradient(b - eta),
                options={"gtol": tol, "ftol": 0.0, "maxiter": 50 * self.max_iters},
            )
        else:
            res = optimize.minimize(
                objective, start, method="Nelder-Mead",
                options={"xatol": tol, "fatol": tol, "maxiter": 200 * self.max_iters * max(1, b.size),
                         "adaptive": b.size > 2},
            )
        if not np.isfinite(res.fun):
            logger.error(f"infimal convolution search failed: {res.message}")
            raise IterationLimitError(f"infimal convolution did not converge: {res.message}", best=res.x)

        best_eta, best = (res.x, float(res.fun)) if res.fun <= values[0] else (candidates[0], values[0])
        return ConjugateResult(value=best, witness=best_eta, iterations=int(getattr(res, "nit", 0)),
                               gap_estimate=tol * (1.0 + abs(best)))

    def fenchel_young_gap(self, F: Functional, F_star: Functional, v: VecLike, xi: VecLike) -> FenchelYoungGap:
        """F(v) + F*(xi) - <xi, v>, clipped at zero alongside the raw value"""
        raw = float(F(_arr(v))) + float(F_star(_arr(xi))) - pairing(xi, v)
        return FenchelYoungGap(gap=max(raw, 0.0), raw=raw)

    def lambda_subgradient_check(
        self,
        E: Callable[[np.ndarray], float],
        u: VecLike,
        xi: VecLike,
        lam: float,
        samples: int,
        norm: Optional[Callable[[np.ndarray], float]] = None,
        scale: float = 1.0,
        seed: int = 0,
        probes: Iterable[VecLike] = (),
        tol: float = 1e-10,
    ) -> SubgradientCheck:
        """E(u) <= E(v) + <xi, u - v> + lam ||u - v||^2 at random and given probes v"""
        if samples < 1:
            raise ContractViolation("samples must be at least 1")
        a, b = _arr(u), _arr(xi)
        norm = norm or (lambda d: float(np.linalg.norm(d)))
        rng = np.random.default_rng(seed)
        Eu = float(E(a))

        points = [_arr(p) for p in probes]
        for _ in range(samples):
            d = rng.standard_normal(a.size)
            points.append(a + scale * rng.uniform() * d / max(np.linalg.norm(d), 1e-300))

        worst, worst_probe = np.inf, None
        for v in points:
            slack = float(E(v)) + float(b @ (a - v)) + lam * norm(a - v) ** 2 - Eu
            if slack < worst:
                worst, worst_probe = slack, v
        passed = worst >= -tol * (1.0 + abs(Eu))
        if not passed:
            logger.debug(f"lambda-convexity probe failed with slack {worst:.3e}")
        return SubgradientCheck(passed, worst, worst_probe)

    def measure_growth(self, spec: DissipationSpec, norm: Callable[[np.ndarray], float],
                       samples: int = 200, seed: int = 0, radius: float = 1.0) -> Tuple[float, float]:
        """Measured (c, C) with c ||v||^2 <= Psi(v) <= C ||v||^2 on sampled v"""
        if spec.psi2 is None and spec.gram_V is not None:
            return 0.5 * spec.mu, 0.5 * spec.mu_max
        rng = np.random.default_rng(seed)
        ratios = []
        for _ in range(samples):
            v = rng.standard_normal(spec.dimension)
            v *= radius * rng.uniform(0.05, 1.0) / max(norm(v), 1e-300)
            ratios.append(self.psi_eval(spec, v) / norm(v) ** 2)
        return float(min(ratios)), float(max(ratios))


convex_service = ConvexService()
