import math

import numpy as np
import pytest

from src.exceptions import ContractViolation
from src.models.config import ProblemConfig
from src.services.diagnostics_service import diagnostics_service
from src.services.problem_service import oscillator_exact, problem_service

OSCILLATOR = ProblemConfig(id="oscillator")


def test_oscillator_satisfies_the_energy_dissipation_inequality(run_problem):
    trajectory = run_problem(0.01, 1.0, id="oscillator")
    report = diagnostics_service.edi_check(trajectory)
    assert report.passed
    assert len(report.entries) == trajectory.N + 1
    assert report.min_slack >= -1e-10


def test_step_slacks_telescope_to_the_whole_interval(run_problem):
    trajectory = run_problem(0.05, 1.0, id="oscillator")
    slacks, _ = diagnostics_service.step_slacks(trajectory)
    assert np.all(slacks >= -1e-12)
    whole = diagnostics_service.edi_check(trajectory, pairs=[(0.0, trajectory.T)]).entries[0]
    assert slacks.sum() == pytest.approx(whole.slack, abs=1e-12)


def test_edi_rejects_degenerate_pairs(run_problem):
    trajectory = run_problem(0.1, 1.0, id="oscillator")
    with pytest.raises(ContractViolation):
        diagnostics_service.edi_check(trajectory, pairs=[(0.5, 0.5)])


@pytest.mark.slow
@pytest.mark.parametrize("s_u,s_v", [(1, 1), (-1, -1)])
def test_p1_energy_dissipation_inequality(run_problem, s_u, s_v):
    trajectory = run_problem(1e-3, 0.5, id="P1", s_u=s_u, s_v=s_v)
    assert diagnostics_service.edi_check(trajectory).passed


@pytest.mark.slow
@pytest.mark.parametrize("r", [2.0, 3.0])
def test_p2_energy_dissipation_inequality(run_problem, r):
    trajectory = run_problem(1e-3, 0.5, id="P2", nodes=32, r=r)
    report = diagnostics_service.edi_check(trajectory)
    assert report.passed
    # the numerical conjugate enters the tolerance through the Fenchel-Young gaps
    assert report.tolerance >= diagnostics_service.edi_tol


@pytest.mark.parametrize("b_law", ["linear", "cubic_truncated"])
def test_p3_energy_dissipation_inequality(run_problem, b_law):
    trajectory = run_problem(1e-3, 0.5, id="P3", nodes=16, b_law=b_law, q=2.0)
    assert diagnostics_service.edi_check(trajectory).passed


@pytest.mark.slow
@pytest.mark.parametrize("route", ["perturbation", "energy"])
@pytest.mark.parametrize("stress", ["linear", "double_well"])
def test_p4_energy_dissipation_inequality(run_problem, route, stress):
    trajectory = run_problem(1e-3, 0.5, id="P4", nodes=32, route=route, stress=stress)
    assert diagnostics_service.edi_check(trajectory).passed


def test_time_modulated_energy_keeps_the_inequality(run_problem):
    trajectory = run_problem(0.01, 1.0, id="oscillator", modulation_amplitude=0.5, modulation_frequency=2.0)
    report = diagnostics_service.edi_check(trajectory)
    assert report.passed


def test_unperturbed_convex_system_loses_energy_at_every_step(run_problem):
    trajectory = run_problem(0.01, 2.0, id="oscillator")
    assert diagnostics_service.energy_monotonicity(trajectory) == []


def test_interpolant_conventions(run_problem):
    trajectory = run_problem(0.25, 1.0, id="oscillator")
    interp = diagnostics_service.interpolants(trajectory)
    U = [rec.U.values for rec in trajectory.records]

    np.testing.assert_array_equal(interp.eval("U_bar", 0.0).values, U[0])
    np.testing.assert_array_equal(interp.eval("U_bar", 0.25).values, U[1])
    np.testing.assert_array_equal(interp.eval("U_bar", 0.3).values, U[2])
    np.testing.assert_array_equal(interp.eval("U_under", 0.25).values, U[1])
    np.testing.assert_array_equal(interp.eval("U_under", 0.3).values, U[1])
    np.testing.assert_array_equal(interp.eval("U_under", 1.0).values, U[4])
    np.testing.assert_allclose(interp.eval("U_hat", 0.375).values, 0.5 * (U[1] + U[2]), rtol=1e-14)
    assert interp.eval("t_bar", 0.3) == 0.5
    assert interp.eval("t_under", 0.3) == 0.25
    assert interp.eval("t_under", 1.0) == 1.0

    # inside (t_{n-1}, t_n) the two constant reconstructions differ by one increment
    diff = interp.eval("U_bar", 0.6).values - interp.eval("U_under", 0.6).values
    np.testing.assert_allclose(diff, U[3] - U[2], rtol=1e-14)

    np.testing.assert_array_equal(interp.eval("xi", 0.3).values, trajectory.records[2].xi.values)
    with pytest.raises(ContractViolation):
        interp.eval("U_bar", 1.5)
    with pytest.raises(ContractViolation):
        interp.eval("W_bar", 0.5)


FORCED_FROM_REST = {"u0": "0", "v0": "0", "forcing": "sin(pi*x)*sin(3*t)"}


@pytest.mark.parametrize("fields,tau0,T", [
    ({"id": "oscillator"}, 2.5e-3, 1.0),
    ({"id": "P1", "nodes": 16}, 2.5e-3, 1.0),
    ({"id": "P2", "nodes": 16, "r": 3.0}, 2.5e-3, 1.0),
    ({"id": "P3", "nodes": 16}, 2.5e-3, 1.0),
    pytest.param({"id": "P4", "nodes": 16, "route": "perturbation", **FORCED_FROM_REST}, 1e-3, 0.5,
                 marks=pytest.mark.slow),
    pytest.param({"id": "P4", "nodes": 16, "route": "energy", **FORCED_FROM_REST}, 1e-3, 0.5,
                 marks=pytest.mark.slow),
])
def test_apriori_bounds_are_stable_in_tau(run_problem, fields, tau0, T):
    taus = (4 * tau0, 2 * tau0, tau0)
    reports = [diagnostics_service.apriori_report(run_problem(tau, T, **fields)) for tau in taus]
    for name in ("M_velocity", "M_energy", "dissipation_integral"):
        values = [getattr(r, name) for r in reports]
        assert max(values) <= 1.1 * min(values), name
    for coarse, fine in zip(reports, reports[1:]):
        for g_coarse, g_fine in zip(coarse.gaps, fine.gaps):
            assert 0.7 <= math.log2(g_coarse / g_fine) <= 1.3


def test_convergence_against_the_closed_form(oscillator):
    system, u0, v0 = oscillator
    exact = problem_service.exact_solution(OSCILLATOR, u0, v0)
    table = diagnostics_service.convergence_study(system, u0, v0, [0.02, 0.01, 0.005], T=1.0, exact=exact)
    assert table.reference == "exact"
    assert table.failure is None
    assert table.rows[0].order_estimate is None
    for row in table.rows[1:]:
        assert 0.8 <= row.order_estimate <= 1.2
    errors = [row.err_L2V for row in table.rows]
    assert errors == sorted(errors, reverse=True)


def test_convergence_against_a_reference_run(oscillator):
    system, u0, v0 = oscillator
    table = diagnostics_service.convergence_study(system, u0, v0, [0.04, 0.02], reference_tau=0.004, T=1.0)
    assert table.reference == "self"
    assert 0.8 <= table.rows[1].order_estimate <= 1.4


def test_convergence_needs_a_reference(oscillator):
    system, u0, v0 = oscillator
    with pytest.raises(ContractViolation):
        diagnostics_service.convergence_study(system, u0, v0, [0.02, 0.01])
    with pytest.raises(ContractViolation):
        diagnostics_service.convergence_study(system, u0, v0, [0.02, 0.01], reference_tau=0.005)


def test_single_step_size_has_no_order(oscillator):
    system, u0, v0 = oscillator
    exact = problem_service.exact_solution(OSCILLATOR, u0, v0)
    table = diagnostics_service.convergence_study(system, u0, v0, [0.01], exact=exact)
    assert len(table.rows) == 1
    assert table.rows[0].order_estimate is None


def test_p3_first_eigenmode_matches_its_scalar_ode(run_problem):
    nodes, mu = 16, 1.0
    h = 1.0 / (nodes - 1)
    lam1 = 4.0 / h ** 2 * math.sin(math.pi * h / 2.0) ** 2

    def error(tau):
        trajectory = run_problem(tau, 0.5, id="P3", nodes=nodes, mu=mu)
        (x,) = trajectory.system.norms.grid.interior_coordinates()
        mode = np.sin(math.pi * x)
        return max(np.abs(rec.U.values - oscillator_exact(rec.t, lam1 + 1.0, mu * lam1)[0] * mode).max()
                   for rec in trajectory.records)

    coarse, fine = error(1e-2), error(5e-3)
    assert 1.6 <= coarse / fine <= 2.4


def test_p4_routes_agree_to_first_order(run_problem):
    def gap(tau):
        a = run_problem(tau, 0.2, id="P4", nodes=16, route="perturbation")
        b = run_problem(tau, 0.2, id="P4", nodes=16, route="energy")
        return np.abs(a.states() - b.states()).max()

    coarse, fine = gap(0.01), gap(0.005)
    assert fine < coarse
    assert 1.5 <= coarse / fine <= 2.6


def test_shift_gap_grows_with_the_shift(run_problem):
    trajectory = run_problem(0.01, 1.0, id="oscillator")
    gaps = [diagnostics_service.shift_gap(trajectory, h) for h in (0.05, 0.1, 0.2)]
    assert gaps[0] < gaps[1] < gaps[2]
    assert diagnostics_service.shift_gap(trajectory, 0.1, "VW") == pytest.approx(2.0 * gaps[1], rel=1e-12)
    with pytest.raises(ContractViolation):
        diagnostics_service.shift_gap(trajectory, 1.0)


def test_shift_gap_vanishes_at_rest(run_problem):
    trajectory = run_problem(0.05, 0.5, id="P3", nodes=10, u0="0", v0="0")
    assert diagnostics_service.shift_gap(trajectory, 0.1) == 0.0


def test_forcing_stability(run_problem):
    trajectory = run_problem(0.01, 1.0, id="oscillator", forcing="sin(t)")
    discrete, continuous = diagnostics_service.forcing_stability(trajectory)
    assert continuous == pytest.approx(0.5 - math.sin(2.0) / 4.0, rel=1e-10)
    assert discrete <= continuous * (1.0 + 1e-12)
    assert discrete == pytest.approx(continuous, rel=1e-3)
    assert diagnostics_service.forcing_stability(run_problem(0.1, 1.0, id="oscillator")) == (0.0, 0.0)


def test_energy_comparability_on_a_modulated_energy(make_problem, rng):
    system, _, _ = make_problem(id="oscillator", model_dim=2, modulation_amplitude=0.5, modulation_frequency=2.0)
    states = [rng.standard_normal(2) for _ in range(200)]
    ok, _ = diagnostics_service.energy_comparability(system, states, 1.0)
    assert ok
    ok, excess = diagnostics_service.energy_comparability(system, states, 1.0, C1=0.0)
    assert not ok
    assert excess > 0.0
