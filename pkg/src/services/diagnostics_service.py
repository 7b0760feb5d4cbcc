import logging
import math
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from config.settings import settings
from src.exceptions import ContractViolation, DinsysError, EdiViolation
from src.models.config import SolverConfig
from src.models.records import (
    AprioriReport,
    ConvergenceRow,
    ConvergenceTable,
    EdiEntry,
    EdiReport,
    Trajectory,
)
from src.models.spaces import DualVec, StateVec
from src.models.system import SystemSpec
from src.services.stepper_service import stepper_service

logger = logging.getLogger(__name__)

ExactSolution = Callable[[float], Tuple[np.ndarray, np.ndarray]]


class Interpolants:
    """Piecewise constant and linear reconstructions of a stored trajectory.

    Bar variants are left-continuous (value U^n on (t_{n-1}, t_n]); under and
    hat variants, xi and f use [t_{n-1}, t_n) with the value at T taken from N.
    """

    def __init__(self, trajectory: Trajectory):
        self.trajectory = trajectory
        self.records = trajectory.records
        self.times = trajectory.times
        self.tau = trajectory.tau
        self.T = float(self.times[-1])
        self.N = len(self.records) - 1

    def _bar_index(self, t: float) -> int:
        # t in (t_{n-1}, t_n] -> n
        return int(np.searchsorted(self.times, t, side="left"))

    def _under_index(self, t: float) -> int:
        # t in [t_{n-1}, t_n) -> n
        if t >= self.T:
            return self.N + 1
        return int(np.searchsorted(self.times, t, side="right"))

    def eval(self, which: str, t: float) -> Union[StateVec, DualVec, float]:
        if not 0.0 <= t <= self.T:
            raise ContractViolation(f"t = {t!r} lies outside [0, {self.T!r}]")
        norms = self.trajectory.system.norms
        recs = self.records

        if which in ("U_bar", "V_bar", "t_bar"):
            n = self._bar_index(t)
            if which == "t_bar":
                return float(self.times[n])
            return recs[n].U if which == "U_bar" else recs[n].V

        n = self._under_index(t)
        if which == "t_under":
            return self.T if n > self.N else float(self.times[n - 1])
        if which in ("U_under", "V_under"):
            rec = recs[min(n, self.N + 1) - 1]
            return rec.U if which == "U_under" else rec.V
        if which in ("xi", "f", "S"):
            rec = recs[min(n, self.N)]
            if which == "xi":
                return rec.xi
            if which == "f":
                return rec.f
            return norms.dual(norms.gram_H @ rec.f.values - rec.B.values)
        if which in ("U_hat", "V_hat"):
            attr = "U" if which == "U_hat" else "V"
            if n > self.N:
                return getattr(recs[self.N], attr)
            left = recs[n - 1]
            if t == left.t:
                return getattr(left, attr)
            right = recs[n]
            theta = (t - left.t) / self.tau
            values = (1.0 - theta) * getattr(left, attr).values + theta * getattr(right, attr).values
            return norms.state(values)
        raise ContractViolation(f"unknown interpolant {which!r}")


class DiagnosticsService:
    """Readers of completed trajectories"""

    def __init__(self):
        self.edi_tol = settings.edi_tol
        self.stepper = stepper_service

    def interpolants(self, trajectory: Trajectory) -> Interpolants:
        return Interpolants(trajectory)

    def eval_interpolant(self, interp: Interpolants, which: str, t: float):
        return interp.eval(which, t)

    def _step_terms(self, trajectory: Trajectory):
        system: SystemSpec = trajectory.system
        norms = system.norms
        recs = trajectory.records
        tau = trajectory.tau
        lam = system.convexity_defect

        kinetic = np.array([0.5 * norms.norm("H", r.V) ** 2 for r in recs])
        energy = np.array([r.energy_value for r in recs])
        n = len(recs)
        dissipation = np.zeros(n)
        power = np.zeros(n)
        work = np.zeros(n)
        defect = np.zeros(n)
        quadrature = np.zeros(n)
        for k in range(1, n):
            rec, prev = recs[k], recs[k - 1]
            dissipation[k] = tau * (rec.psi_value + rec.psi_star_value)
            # the integrand d_r E_r(U^{k-1}) is integrated exactly
            power[k] = system.energy.value(rec.t, prev.U.values) - system.energy.value(prev.t, prev.U.values)
            S = norms.gram_H @ rec.f.values - rec.B.values
            work[k] = tau * float(S @ rec.V.values)
            defect[k] = lam * tau * tau * norms.norm("V", rec.V) ** 2
            quadrature[k] = tau * abs(rec.fy_gap)
        return kinetic, energy, dissipation, power, work, defect, quadrature

    def step_slacks(self, trajectory: Trajectory) -> Tuple[np.ndarray, np.ndarray]:
        """Per-step slacks of the energy-dissipation inequality, lambda and lambda/2 variants"""
        kin, en, diss, power, work, defect, _ = self._step_terms(trajectory)
        base = kin[:-1] + en[:-1] - kin[1:] - en[1:] + power[1:] + work[1:] - diss[1:]
        return base + defect[1:], base + 0.5 * defect[1:]

    def edi_check(self, trajectory: Trajectory, pairs: Optional[Iterable[Tuple[float, float]]] = None,
                  raise_on_violation: bool = False) -> EdiReport:
        """Both sides of the discrete energy-dissipation inequality on each (s, t)"""
        if not trajectory.complete:
            raise ContractViolation("edi_check needs a complete trajectory")
        interp = self.interpolants(trajectory)
        times = trajectory.times
        if pairs is None:
            pairs = [(times[k - 1], times[k]) for k in range(1, len(times))] + [(0.0, trajectory.T)]

        kin, en, diss, power, work, defect, quad = self._step_terms(trajectory)
        c_diss, c_power = np.cumsum(diss), np.cumsum(power)
        c_work, c_defect, c_quad = np.cumsum(work), np.cumsum(defect), np.cumsum(quad)
        scale = 1.0 + float(np.max(kin + np.abs(en))) + float(c_diss[-1]) + float(np.sum(np.abs(work)))
        tolerance = self.edi_tol * scale + float(c_quad[-1])

        entries: List[EdiEntry] = []
        for s, t in pairs:
            if not s < t:
                raise ContractViolation(f"pair ({s!r}, {t!r}) needs s < t")
            j, k = interp._bar_index(s), interp._bar_index(t)
            lhs = kin[k] + en[k] + (c_diss[k] - c_diss[j])
            rhs_base = kin[j] + en[j] + (c_power[k] - c_power[j]) + (c_work[k] - c_work[j])
            d = c_defect[k] - c_defect[j]
            entries.append(EdiEntry(
                s=float(s), t=float(t),
                lhs=float(lhs), rhs=float(rhs_base + d),
                slack=float(rhs_base + d - lhs),
                slack_half_lambda=float(rhs_base + 0.5 * d - lhs),
                quadrature_error=float(c_quad[k] - c_quad[j]),
            ))

        report = EdiReport(entries=entries, tolerance=tolerance)
        if report.violations:
            worst = min(report.violations, key=lambda e: e.slack)
            logger.warning(f"{len(report.violations)} EDI violations, worst on [{worst.s!r}, {worst.t!r}] "
                           f"with slack {worst.slack:.3e}")
            if raise_on_violation:
                raise EdiViolation(worst.s, worst.t, worst.slack)
        return report

    def apriori_report(self, trajectory: Trajectory) -> AprioriReport:
        system: SystemSpec = trajectory.system
        norms = system.norms
        interp = self.interpolants(trajectory)
        recs = trajectory.records
        tau = trajectory.tau
        mids = [rec.t - 0.5 * tau for rec in recs[1:]]
        samples = sorted(set(trajectory.times.tolist()) | set(mids))

        M_velocity = max(norms.norm("H", rec.V) for rec in recs)
        M_energy = max(system.energy.value(t, interp.eval("U_bar", t).values) for t in samples)
        M_power = max(abs(system.energy.time_derivative(t, interp.eval("U_under", t).values)) for t in samples)
        dissipation = float(sum(tau * (rec.psi_value + rec.psi_star_value) for rec in recs[1:]))

        gaps = [0.0, 0.0, 0.0, 0.0]
        for t in samples:
            U_bar, V_bar = interp.eval("U_bar", t).values, interp.eval("V_bar", t).values
            gaps[0] = max(gaps[0], norms.norm("V", interp.eval("U_under", t).values - U_bar))
            gaps[1] = max(gaps[1], norms.norm("V", interp.eval("U_hat", t).values - U_bar))
            # velocity gaps are measured in U* through the H-Riesz map
            gaps[2] = max(gaps[2], norms.dual_norm("U*", norms.gram_H @ (V_bar - interp.eval("V_hat", t).values)))
            gaps[3] = max(gaps[3], norms.dual_norm("U*", norms.gram_H @ (interp.eval("V_under", t).values - V_bar)))

        return AprioriReport(
            M_velocity=float(M_velocity),
            M_energy=float(M_energy),
            M_power=float(M_power),
            dissipation_integral=dissipation,
            gap_U_under=gaps[0],
            gap_U_hat=gaps[1],
            gap_V_hat=gaps[2],
            gap_V_under=gaps[3],
        )

    def shift_gap(self, trajectory: Trajectory, h: float, norm_tag: str = "V") -> float:
        """||sigma_h U_bar - U_bar|| over (0, T - h) by exact piecewise quadrature"""
        T = trajectory.T
        if not 0.0 < h < T:
            raise ContractViolation(f"shift h = {h!r} must lie in (0, {T!r})")
        if norm_tag not in ("V", "W", "VW"):
            raise ContractViolation(f"unknown norm tag {norm_tag!r}")
        norms = trajectory.system.norms
        interp = self.interpolants(trajectory)
        times = trajectory.times
        breaks = np.unique(np.concatenate([times, times - h, [0.0, T - h]]))
        breaks = breaks[(breaks >= 0.0) & (breaks <= T - h)]

        l2, lr = 0.0, 0.0
        r = norms.w_exponent
        for a, b in zip(breaks[:-1], breaks[1:]):
            length = b - a
            if length <= 0.0:
                continue
            m = 0.5 * (a + b)
            diff = interp.eval("U_bar", m + h).values - interp.eval("U_bar", m).values
            if norm_tag in ("V", "VW"):
                l2 += length * norms.norm("V", diff) ** 2
            if norm_tag in ("W", "VW"):
                lr += length * norms.norm("W", diff) ** r
        if norm_tag == "V":
            return math.sqrt(l2)
        if norm_tag == "W":
            return lr ** (1.0 / r)
        return math.sqrt(l2) + lr ** (1.0 / r)

    def energy_monotonicity(self, trajectory: Trajectory, rtol: float = 1e-12) -> List[int]:
        """Steps n at which (1/2)|V^n|^2 + E(t_n, U^n) increases"""
        norms = trajectory.system.norms
        totals = [0.5 * norms.norm("H", rec.V) ** 2 + rec.energy_value for rec in trajectory.records]
        scale = 1.0 + max(abs(x) for x in totals)
        return [n for n in range(1, len(totals)) if totals[n] > totals[n - 1] + rtol * scale]

    def forcing_stability(self, trajectory: Trajectory, points: int = 8) -> Tuple[float, float]:
        """(sum_n tau |f^n|_H^2, integral of |f|_H^2) with a fine Gauss rule per interval"""
        system: SystemSpec = trajectory.system
        norms = system.norms
        tau = trajectory.tau
        discrete = float(sum(tau * norms.norm("H", rec.f) ** 2 for rec in trajectory.records[1:]))
        if system.forcing.is_zero:
            return discrete, 0.0
        x, w = leggauss(points)
        continuous = 0.0
        for rec in trajectory.records[1:]:
            mid = rec.t - 0.5 * tau
            for xk, wk in zip(x, w):
                continuous += 0.5 * tau * wk * norms.norm("H", system.forcing(mid + 0.5 * tau * xk)) ** 2
        return discrete, continuous

    def energy_comparability(self, system: SystemSpec, states: Sequence[np.ndarray], T: float,
                             C1: Optional[float] = None, seed: int = 0) -> Tuple[bool, float]:
        """Spot-check exp(-C1|t-s|) E_s(u) <= E_t(u) <= exp(C1|t-s|) E_s(u); returns the worst log-ratio excess"""
        C1 = system.energy.power_constant if C1 is None else C1
        rng = np.random.default_rng(seed)
        worst = -np.inf
        for u in states:
            s, t = rng.uniform(0.0, T, size=2)
            Es, Et = system.energy.value(s, u), system.energy.value(t, u)
            if Es <= 0.0 or Et <= 0.0:
                continue
            worst = max(worst, abs(math.log(Et / Es)) - C1 * abs(t - s))
        return bool(worst <= 1e-12), float(worst)

    def convergence_table(self, trajectories: Sequence[Trajectory],
                          reference: Union[Trajectory, ExactSolution]) -> ConvergenceTable:
        """Errors of U_hat in C(H) and L2(V) and of V_hat in C(H) for runs ordered by decreasing tau"""
        rows: List[ConvergenceRow] = []
        for traj in trajectories:
            if isinstance(reference, Trajectory):
                err = self._errors_vs_trajectory(traj, reference)
            else:
                err = self._errors_vs_exact(traj, reference)
            order = None
            if rows and rows[-1].err_CH > 0.0 and err[0] > 0.0 and rows[-1].tau != traj.tau:
                order = math.log(rows[-1].err_CH / err[0]) / math.log(rows[-1].tau / traj.tau)
            rows.append(ConvergenceRow(traj.tau, err[0], err[1], err[2], order))
        label = "self" if isinstance(reference, Trajectory) else "exact"
        return ConvergenceTable(rows=rows, reference=label)

    def convergence_study(self, system: SystemSpec, u0, v0, taus: Sequence[float],
                          reference_tau: Optional[float] = None, T: float = 1.0,
                          exact: Optional[ExactSolution] = None,
                          solver: Optional[SolverConfig] = None) -> ConvergenceTable:
        if exact is None:
            if reference_tau is None:
                raise ContractViolation("a reference step or an exact solution is required")
            others = [tau for tau in taus if tau != reference_tau]
            if others and not reference_tau < min(others) / 4.0:
                raise ContractViolation("reference_tau must be below min(taus)/4")
        base = solver or SolverConfig(tau=min(taus), T=T)

        trajectories: List[Trajectory] = []
        try:
            reference = exact
            if exact is None:
                reference = self.stepper.run(system, u0, v0, base.model_copy(update={"tau": reference_tau}))
            for tau in taus:
                trajectories.append(self.stepper.run(system, u0, v0, base.model_copy(update={"tau": tau})))
        except DinsysError as e:
            logger.error(f"convergence study aborted: {e}")
            table = self.convergence_table(trajectories, reference) if trajectories and reference is not None \
                else ConvergenceTable(rows=[])
            table.failure = str(e)
            return table
        return self.convergence_table(trajectories, reference)

    def _errors_vs_trajectory(self, traj: Trajectory, ref: Trajectory) -> Tuple[float, float, float]:
        norms = traj.system.norms
        a_int, b_int = Interpolants(traj), Interpolants(ref)
        grid = np.unique(np.concatenate([traj.times, ref.times]))
        grid = grid[grid <= min(traj.T, ref.T)]
        dU = [a_int.eval("U_hat", t).values - b_int.eval("U_hat", t).values for t in grid]
        dV = [a_int.eval("V_hat", t).values - b_int.eval("V_hat", t).values for t in grid]
        err_CH = max(norms.norm("H", d) for d in dU)
        err_V = max(norms.norm("H", d) for d in dV)
        # the difference is linear on every merged segment
        l2 = 0.0
        for k in range(len(grid) - 1):
            delta = grid[k + 1] - grid[k]
            a, b = dU[k], dU[k + 1]
            l2 += delta / 3.0 * (norms.inner("V", a, a) + norms.inner("V", a, b) + norms.inner("V", b, b))
        return float(err_CH), float(math.sqrt(max(l2, 0.0))), float(err_V)

    def _errors_vs_exact(self, traj: Trajectory, exact: ExactSolution) -> Tuple[float, float, float]:
        norms = traj.system.norms
        err_CH = max(norms.norm("H", rec.U.values - exact(rec.t)[0]) for rec in traj.records)
        err_V = max(norms.norm("H", rec.V.values - exact(rec.t)[1]) for rec in traj.records)
        x, w = leggauss(3)
        l2 = 0.0
        for prev, rec in zip(traj.records[:-1], traj.records[1:]):
            for xk, wk in zip(x, w):
                theta = 0.5 * (1.0 + xk)
                t = prev.t + theta * traj.tau
                d = (1.0 - theta) * prev.U.values + theta * rec.U.values - exact(t)[0]
                l2 += 0.5 * traj.tau * wk * norms.norm("V", d) ** 2
        return float(err_CH), float(math.sqrt(l2)), float(err_V)


diagnostics_service = DiagnosticsService()
