import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg, sparse

from src.exceptions import ContractViolation, DinsysError
from src.models.config import ProblemConfig
from src.models.convex import DissipationSpec, PowerLaw
from src.models.energies import (
    DoubleWellTerm,
    EnergyFunctional,
    GradientPotentialTerm,
    PLaplaceTerm,
    QuadraticTerm,
)
from src.models.records import AuditEntry, AuditReport
from src.models.spaces import GridSpec, NormFamily, StateVec
from src.models.system import (
    Forcing,
    GrowthConstants,
    NodalPerturbation,
    NonlinearLaw,
    PowerPerturbation,
    StressPerturbation,
    SystemSpec,
    ZeroPerturbation,
)
from src.numerics.expressions import SpaceTimeExpression
from src.numerics.stencils import clamped_second_difference, gradient_stencil, lumped_mass
from src.services.convex_service import convex_service
from src.services.diagnostics_service import diagnostics_service

logger = logging.getLogger(__name__)

DEFAULT_U0 = {
    "oscillator": "1",
    "P1": "0.5*sin(pi*x)",
    "P2": "0.5*sin(pi*x)",
    "P3": "sin(pi*x)",
    "P4": "0.1*sin(pi*x)**2",
}


def oscillator_exact(t: float, k: float = 1.0, c: float = 1.0, u0: float = 1.0,
                     v0: float = 0.0) -> Tuple[float, float]:
    """Closed-form (u, u') of u'' + c u' + k u = 0"""
    alpha = -0.5 * c
    disc = c * c - 4.0 * k
    if disc < 0.0:
        omega = 0.5 * math.sqrt(-disc)
        A, B = u0, (v0 - alpha * u0) / omega
        e = math.exp(alpha * t)
        cs, sn = math.cos(omega * t), math.sin(omega * t)
        return e * (A * cs + B * sn), e * ((alpha * A + omega * B) * cs + (alpha * B - omega * A) * sn)
    if disc == 0.0:
        A, B = u0, v0 - alpha * u0
        e = math.exp(alpha * t)
        return e * (A + B * t), e * (alpha * A + B + alpha * B * t)
    r1 = 0.5 * (-c + math.sqrt(disc))
    r2 = 0.5 * (-c - math.sqrt(disc))
    C1 = (v0 - r2 * u0) / (r1 - r2)
    C2 = u0 - C1
    return C1 * math.exp(r1 * t) + C2 * math.exp(r2 * t), r1 * C1 * math.exp(r1 * t) + r2 * C2 * math.exp(r2 * t)


class ProblemService:
    """Discretized example systems and assumption audits"""

    def __init__(self):
        self.convex = convex_service
        self.diagnostics = diagnostics_service

    # -- shared pieces ---------------------------------------------------------

    def _growth(self, config: ProblemConfig) -> GrowthConstants:
        return GrowthConstants(beta=config.beta, c=config.c, c_tilde=config.c_tilde, nu=config.growth_nu,
                               C1=config.C1, C_hat=config.C_hat, sigma=config.sigma)

    def _energy(self, terms, config: ProblemConfig) -> EnergyFunctional:
        return EnergyFunctional(tuple(terms), modulation_amplitude=config.modulation_amplitude,
                                modulation_frequency=config.modulation_frequency)

    def _forcing(self, config: ProblemConfig, grid: Optional[GridSpec], dimension: int) -> Forcing:
        expression = SpaceTimeExpression(config.forcing)
        if expression.is_zero:
            return Forcing.zero(dimension)
        coords = grid.interior_coordinates() if grid is not None else (np.zeros(dimension),)
        return Forcing(expression, coords, dimension)

    def _grid_family(self, grid: GridSpec, stencil, w_exponent: float, u_rows: List[np.ndarray],
                     u_weights: List[np.ndarray], u_exponent: float, config: ProblemConfig,
                     density: float = 1.0) -> NormFamily:
        n = grid.interior_count
        return NormFamily(
            gram_H=lumped_mass(n, grid.spacing, density),
            gram_V=stencil.stiffness(),
            w_weights=np.full(n, grid.cell_volume),
            w_exponent=w_exponent,
            u_operator=np.vstack(u_rows),
            u_weights=np.concatenate(u_weights),
            u_exponent=u_exponent,
            grid=grid,
            embedding_order=config.embedding_order,
        )

    def _semilinear_parts(self, config: ProblemConfig, w_exponent: float):
        grid = config.grid()
        stencil = gradient_stencil(grid.nodes, grid.spacing)
        n = grid.interior_count
        E_dense = np.asarray(stencil.E.todense())
        norms = self._grid_family(grid, stencil, w_exponent,
                                  [np.eye(n), E_dense], [np.full(n, grid.cell_volume), stencil.edge_weights],
                                  config.p, config)
        mass = np.full(n, grid.cell_volume)
        terms = [PLaplaceTerm(stencil, config.p)]
        lam = 0.0
        if config.double_well:
            terms.append(DoubleWellTerm(mass, constant=0.25 * (grid.volume - n * grid.cell_volume)))
            # E = convex part - (1/2)|u|_H^2
            lam = 0.5 * norms.embedding_constant("V", "H") ** 2
        return grid, norms, mass, terms, lam

    # -- builders --------------------------------------------------------------

    def build_p1(self, config: ProblemConfig) -> SystemSpec:
        """Damped p-Laplacian wave with double well and power perturbations, quadratic dissipation"""
        grid, norms, mass, terms, lam = self._semilinear_parts(config, w_exponent=config.q)
        A = norms.gram_V + config.mass_damping * norms.gram_H
        s_v = float(config.s_v) if config.velocity_perturbation else 0.0
        system = SystemSpec(
            energy=self._energy(terms, config),
            lam=lam,
            dissipation=DissipationSpec(A, mode="a", gram_V=norms.gram_V),
            perturbation=PowerPerturbation(mass, s_u=float(config.s_u), q=config.q, s_v=s_v, r=config.r),
            forcing=self._forcing(config, grid, grid.interior_count),
            norms=norms,
            growth=self._growth(config),
            name="P1",
            notes=tuple(self.admissibility_warnings(config)),
        )
        logger.info(f"built P1 on {grid.nodes} nodes, p={config.p}, q={config.q}, r={config.r}, lambda={lam:.4e}")
        return system

    def build_p2(self, config: ProblemConfig) -> SystemSpec:
        """P1 with the velocity power term moved into an L^r dissipation"""
        if config.r <= 1.0:
            raise ContractViolation("r must exceed 1")
        grid, norms, mass, terms, lam = self._semilinear_parts(config, w_exponent=config.r)
        system = SystemSpec(
            energy=self._energy(terms, config),
            lam=lam,
            dissipation=DissipationSpec(norms.gram_V, psi2=PowerLaw(config.r, mass), mode="b",
                                        gram_V=norms.gram_V),
            perturbation=PowerPerturbation(mass, s_u=float(config.s_u), q=config.q, s_v=0.0),
            forcing=self._forcing(config, grid, grid.interior_count),
            norms=norms,
            growth=self._growth(config),
            name="P2",
            notes=tuple(self.admissibility_warnings(config)),
        )
        logger.info(f"built P2 on {grid.nodes} nodes, r={config.r}")
        return system

    def build_p3(self, config: ProblemConfig) -> SystemSpec:
        """Viscously regularized Klein-Gordon equation"""
        grid = config.grid()
        stencil = gradient_stencil(grid.nodes, grid.spacing)
        n = grid.interior_count
        K = stencil.stiffness()
        norms = self._grid_family(grid, stencil, 2.0, [np.asarray(stencil.E.todense())],
                                  [stencil.edge_weights], 2.0, config)
        law = NonlinearLaw(config.b_law, config.b_coefficient, config.truncation_radius, config.q)
        system = SystemSpec(
            energy=self._energy([QuadraticTerm(K)], config),
            lam=0.0,
            dissipation=DissipationSpec(config.mu * K, mode="a", gram_V=K),
            perturbation=NodalPerturbation(np.full(n, grid.cell_volume), law),
            forcing=self._forcing(config, grid, n),
            norms=norms,
            growth=self._growth(config),
            name="P3",
            notes=tuple(self.admissibility_warnings(config)),
        )
        logger.info(f"built P3 on {grid.nodes} nodes, b={config.b_law}, mu={config.mu}")
        return system

    def build_p4(self, config: ProblemConfig) -> SystemSpec:
        """1D viscous, capillary phase-transition model; stress as perturbation or inside the energy"""
        if config.dimension != 1:
            raise ContractViolation("P4 is one-dimensional")
        grid = config.grid()
        nodes, h = grid.nodes[0], grid.spacing[0]
        S, omega = clamped_second_difference(nodes, h)
        stencil = gradient_stencil(grid.nodes, grid.spacing)
        n = grid.interior_count
        K = stencil.stiffness()
        biharmonic = np.asarray((S.T @ sparse.diags(omega) @ S).todense())
        E_dense = np.asarray(stencil.E.todense())
        norms = self._grid_family(
            grid, stencil, 2.0,
            [np.eye(n), E_dense, np.asarray(S.todense())],
            [np.full(n, h), stencil.edge_weights, omega], 2.0, config, density=config.rho)

        stress = GradientPotentialTerm(stencil, config.stress)
        capillarity = QuadraticTerm(biharmonic, config.mu)
        if config.route == "energy":
            # int |u''|^2 >= C int |u'|^2
            C = float(linalg.eigh(biharmonic, K, eigvals_only=True)[0])
            ab = stress.andrews_ball
            if ab >= C * config.mu:
                raise ContractViolation(
                    f"energy route loses convexity: Andrews-Ball constant {ab} >= C * mu = {C * config.mu:.4e}")
            terms, perturbation, lam = [stress, capillarity], ZeroPerturbation(n), 0.5 * ab
        else:
            terms, perturbation, lam = [capillarity], StressPerturbation(stress), 0.0

        system = SystemSpec(
            energy=self._energy(terms, config),
            lam=lam,
            dissipation=DissipationSpec(config.nu * K, mode="a", gram_V=K),
            perturbation=perturbation,
            forcing=self._forcing(config, grid, n),
            norms=norms,
            growth=self._growth(config),
            name="P4",
            notes=tuple(self.admissibility_warnings(config)),
        )
        logger.info(f"built P4 ({config.route} route, {config.stress} stress) on {nodes} nodes")
        return system

    def build_oscillator(self, dim: int, K: np.ndarray, C_damp: np.ndarray,
                         config: Optional[ProblemConfig] = None) -> SystemSpec:
        """u'' + C u' + K u = f on Euclidean R^dim"""
        config = config or ProblemConfig()
        K, C_damp = np.atleast_2d(np.asarray(K, dtype=float)), np.atleast_2d(np.asarray(C_damp, dtype=float))
        for name, M in (("K", K), ("C_damp", C_damp)):
            if M.shape != (dim, dim):
                raise ContractViolation(f"{name} must be {dim}x{dim}, got {M.shape}")
            if not np.allclose(M, M.T) or linalg.eigvalsh(M)[0] <= 0.0:
                raise ContractViolation(f"{name} must be symmetric positive definite")
        norms = NormFamily.euclidean(dim)
        return SystemSpec(
            energy=self._energy([QuadraticTerm(K)], config),
            lam=0.0,
            dissipation=DissipationSpec(C_damp, mode="a", gram_V=norms.gram_V),
            perturbation=ZeroPerturbation(dim),
            forcing=self._forcing(config, None, dim),
            norms=norms,
            growth=self._growth(config),
            name="oscillator",
        )

    def build(self, config: ProblemConfig) -> SystemSpec:
        for warning in self.admissibility_warnings(config):
            logger.warning(warning)
        if config.id == "P1":
            return self.build_p1(config)
        if config.id == "P2":
            return self.build_p2(config)
        if config.id == "P3":
            return self.build_p3(config)
        if config.id == "P4":
            return self.build_p4(config)
        dim = config.model_dim
        K = np.eye(dim) if config.stiffness is None else np.array(config.stiffness)
        C = np.eye(dim) if config.damping is None else np.array(config.damping)
        return self.build_oscillator(dim, K, C, config)

    # -- data ------------------------------------------------------------------

    def initial_data(self, config: ProblemConfig, system: SystemSpec) -> Tuple[StateVec, StateVec]:
        def values(spec, default: str) -> np.ndarray:
            spec = default if spec is None else spec
            if isinstance(spec, list):
                arr = np.asarray(spec, dtype=float)
                if arr.shape != (system.dimension,):
                    raise ContractViolation(f"initial data need {system.dimension} values, got {arr.size}")
                return arr
            if isinstance(spec, (int, float)):
                return np.full(system.dimension, float(spec))
            coords = system.norms.grid.interior_coordinates() if system.norms.grid is not None \
                else (np.zeros(system.dimension),)
            return SpaceTimeExpression(spec)(coords, 0.0)

        u0_default = DEFAULT_U0[config.id]
        if config.id in ("P1", "P2") and config.dimension == 2:
            u0_default += "*sin(pi*y)"
        u0 = system.norms.state(values(config.u0, u0_default))
        v0 = system.norms.state(values(config.v0, "0"))
        return u0, v0

    def exact_solution(self, config: ProblemConfig, u0: StateVec,
                       v0: StateVec) -> Optional[Callable[[float], Tuple[np.ndarray, np.ndarray]]]:
        """Closed form for unforced oscillators with diagonal K and C, else None"""
        if config.id != "oscillator" or not SpaceTimeExpression(config.forcing).is_zero:
            return None
        if config.modulation_amplitude != 0.0:
            return None
        dim = config.model_dim
        K = np.eye(dim) if config.stiffness is None else np.array(config.stiffness, dtype=float)
        C = np.eye(dim) if config.damping is None else np.array(config.damping, dtype=float)
        if np.count_nonzero(K - np.diag(np.diag(K))) or np.count_nonzero(C - np.diag(np.diag(C))):
            return None
        k, c = np.diag(K), np.diag(C)
        a, b = u0.values, v0.values

        def exact(t: float) -> Tuple[np.ndarray, np.ndarray]:
            pairs = [oscillator_exact(t, k[i], c[i], a[i], b[i]) for i in range(dim)]
            return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

        return exact

    def admissibility_warnings(self, config: ProblemConfig) -> List[str]:
        """Exponent ranges under which the examples satisfy every assumption; advisory only"""
        warnings: List[str] = []
        d = config.dimension
        if config.id in ("P1", "P2"):
            if d < 3 or config.p <= d:
                warnings.append(f"{config.id}: d = {d}, p = {config.p} outside d >= 3, p > d")
            if not 1.0 < config.q < config.p / 2.0 + 1.0:
                warnings.append(f"{config.id}: q = {config.q} outside (1, p/2 + 1)")
            if config.id == "P1" and not 1.0 < config.r <= 2.0:
                warnings.append(f"P1: r = {config.r} outside (1, 2]")
        if config.id == "P3" and config.b_law == "cubic_truncated" and not 1.0 < config.q <= 2.0:
            warnings.append(f"P3: q = {config.q} outside (1, 2]")
        return warnings

    # -- audit -----------------------------------------------------------------

    def _sample_ball(self, rng, system: SystemSpec, radius: float) -> np.ndarray:
        d = rng.standard_normal(system.dimension)
        return d * radius * rng.uniform() / max(system.norms.norm("V", d), 1e-300)

    def assumption_audit(self, system: SystemSpec, samples: int, T: float = 1.0, seed: int = 0,
                         radius: float = 2.0, probes: int = 20) -> AuditReport:
        """Measure the constants of the structural assumptions on sampled (t, u, v)"""
        if samples < 1:
            raise ContractViolation("samples must be at least 1")
        rng = np.random.default_rng(seed)
        norms, energy, g = system.norms, system.energy, system.growth
        spec = system.dissipation
        points = [(0.0, np.zeros(system.dimension), np.zeros(system.dimension))]
        for _ in range(samples):
            points.append((float(rng.uniform(0.0, T)), self._sample_ball(rng, system, radius),
                           self._sample_ball(rng, system, radius)))
        level = max(energy.value(t, u) for t, u, _ in points)
        entries: List[AuditEntry] = []

        lowest = min(energy.value(t, u) for t, u, _ in points)
        entries.append(AuditEntry("energy_lower_bound", lowest, 0.0, lowest >= -1e-12,
                                  f"min E over {len(points)} points, sublevel {level:.4e}"))

        C1 = g.C1 if g.C1 is not None else energy.power_constant
        power = 0.0
        for t, u, _ in points:
            dE, E = abs(energy.time_derivative(t, u)), energy.value(t, u)
            if dE > 0.0:
                power = max(power, dE / E if E > 0.0 else math.inf)
        entries.append(AuditEntry("power_control", power, C1, power <= C1 * (1.0 + 1e-9) + 1e-12,
                                  "max |d_t E| / E"))

        ok, excess = self.diagnostics.energy_comparability(system, [u for _, u, _ in points], T, C1, seed)
        entries.append(AuditEntry("energy_comparability", excess, 0.0, ok,
                                  "max |log(E_t/E_s)| - C1 |t - s|"))

        worst_lambda = math.inf
        for t, u, _ in points[: min(len(points), 50)]:
            check = self.convex.lambda_subgradient_check(
                lambda x: energy.value(t, x), u, energy.gradient(t, u), system.convexity_defect, probes,
                norm=lambda x: norms.norm("V", x), scale=radius, seed=int(rng.integers(1 << 31)))
            worst_lambda = min(worst_lambda, check.worst_slack)
        entries.append(AuditEntry("lambda_convexity", worst_lambda, 0.0,
                                  worst_lambda >= -1e-10 * (1.0 + level),
                                  f"worst slack with lambda = {system.convexity_defect:.4e}"))

        C_hat = 0.0
        try:
            for t, u, _ in points:
                xi = norms.dual_norm("U*", energy.gradient(t, u))
                C_hat = max(C_hat, xi ** g.sigma / max(1.0 + energy.value(t, u) + norms.norm("U", u), 1e-300))
        except DinsysError as e:
            logger.error(f"subgradient control audit failed: {e}")
            C_hat = math.inf
        threshold = g.C_hat
        detail = f"max ||xi||_U*^sigma / (1 + E + ||u||_U), sigma = {g.sigma}"
        if threshold is None:
            # only finiteness is checked without a configured C_hat
            detail += ", ungated (set C_hat to gate)"
        entries.append(AuditEntry("subgradient_control", C_hat, threshold,
                                  math.isfinite(C_hat) and (threshold is None or C_hat <= threshold), detail))

        beta = 0.0
        try:
            for t, u, v in points:
                B = system.perturbation(t, u, v)
                if not np.any(B):
                    continue
                lhs = g.c * self.convex.psi_star(spec, -B / g.c).value
                psi = self.convex.psi_eval(spec, v)
                rhs = 1.0 + energy.value(t, u) + norms.norm("H", v) ** 2 + psi ** g.nu
                beta = max(beta, lhs / max(rhs, 1e-300))
        except DinsysError as e:
            logger.error(f"perturbation growth audit failed: {e}")
            beta = math.inf
        entries.append(AuditEntry("perturbation_growth", beta, g.beta, beta <= g.beta,
                                  "max c Psi*(-B/c) / (1 + E + |v|^2 + Psi(v)^nu)"))

        c_psi, C_psi = self.convex.measure_growth(spec, lambda x: norms.norm("V", x), samples=min(samples, 200),
                                                  seed=seed, radius=radius)
        entries.append(AuditEntry("dissipation_growth", c_psi, 0.0, c_psi > 0.0,
                                  f"c = {c_psi:.4e}, C = {C_psi:.4e}"))

        x, w = leggauss(4)
        f_sq = 0.0
        if not system.forcing.is_zero:
            edges = np.linspace(0.0, T, 65)
            for a, b in zip(edges[:-1], edges[1:]):
                for xk, wk in zip(x, w):
                    f_sq += 0.5 * (b - a) * wk * norms.norm("H", system.forcing(0.5 * (a + b + (b - a) * xk))) ** 2
        entries.append(AuditEntry("forcing_integrability", f_sq, None, math.isfinite(f_sq),
                                  "integral of |f|_H^2 over [0, T]"))

        report = AuditReport(entries=entries, samples=samples,
                             extras={"energy_level": level, "c_psi": c_psi, "C_psi": C_psi})
        for entry in entries:
            log = logger.info if entry.passed else logger.warning
            log(f"audit {entry.name}: measured {entry.measured:.4e}, threshold {entry.threshold}, "
                f"{'pass' if entry.passed else 'FAIL'}")
        return report


problem_service = ProblemService()
