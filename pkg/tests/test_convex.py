import numpy as np
import pytest

from src.exceptions import ContractViolation, DomainError
from src.models.convex import DissipationSpec, PowerLaw, SmoothFunctional
from src.numerics.newton import damped_newton
from src.services.convex_service import convex_service


def _spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def _quadratic(A):
    return SmoothFunctional(value=lambda v: 0.5 * float(v @ A @ v), gradient=lambda v: A @ v,
                            hessian=lambda v: A)


def _power(law):
    return SmoothFunctional(value=law.value, gradient=law.gradient, hessian=law.hessian)


def _sum(F, G):
    return SmoothFunctional(value=lambda v: F.value(v) + G.value(v),
                            gradient=lambda v: F.gradient(v) + G.gradient(v),
                            hessian=lambda v: F.hessian(v) + G.hessian(v))


def test_newton_minimises_a_quadratic(rng):
    A = _spd(rng, 5)
    b = rng.standard_normal(5)
    res = damped_newton(lambda x: 0.5 * x @ A @ x - b @ x, lambda x: A @ x - b, lambda x: A,
                        np.zeros(5), 1e-12, 20)
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), rtol=1e-10)


def test_newton_reports_unbounded_problems():
    res = damped_newton(lambda x: -float(x.sum()), lambda x: -np.ones_like(x), lambda x: np.zeros((2, 2)),
                        np.zeros(2), 1e-10, 50, divergence_radius=1e8)
    assert res.unbounded
    assert not res.converged


def test_newton_rejects_non_finite_start():
    with pytest.raises(DomainError):
        damped_newton(lambda x: np.inf, lambda x: x, lambda x: np.eye(1), np.zeros(1), 1e-10, 5)


def test_psi1_conjugate_closed_form_matches_numerical_supremum(rng):
    A = _spd(rng, 4)
    spec = DissipationSpec(A)
    F = _quadratic(A)
    for _ in range(100):
        xi = rng.standard_normal(4)
        closed = convex_service.psi1_conjugate(spec, xi)
        numeric = convex_service.conjugate_numeric(F, xi)
        assert closed.value == pytest.approx(numeric.value, abs=1e-6)
        assert closed.value == pytest.approx(0.5 * xi @ np.linalg.solve(A, xi), rel=1e-10)


def test_psi1_conjugate_of_identity_is_half_square():
    spec = DissipationSpec(np.eye(3))
    assert convex_service.psi1_conjugate(spec, np.array([1.0, 2.0, 2.0])).value == pytest.approx(4.5)


def test_power_law_conjugate_closed_form(rng):
    law = PowerLaw(3.0, np.array([0.5, 1.0, 2.0]))
    spec = DissipationSpec(np.eye(3), psi2=law, mode="b")
    xi = rng.standard_normal(3)
    closed = convex_service.psi2_conjugate(spec, xi)
    numeric = convex_service.conjugate_numeric(_power(law), xi)
    assert closed.value == pytest.approx(numeric.value, abs=1e-8)


def test_conjugate_of_a_linear_functional_is_unbounded():
    F = SmoothFunctional(value=lambda v: 0.0, gradient=lambda v: np.zeros_like(v),
                         hessian=lambda v: np.zeros((v.size, v.size)))
    res = convex_service.conjugate_numeric(F, np.array([1.0, 0.0]))
    assert res.unbounded
    assert res.value == float("inf")


def test_mode_b_psi_star_is_the_conjugate_of_the_sum(rng):
    A = _spd(rng, 3)
    law = PowerLaw(3.0, np.ones(3))
    spec = DissipationSpec(A, psi2=law, mode="b")
    xi = rng.standard_normal(3)
    direct = convex_service.conjugate_numeric(_sum(_quadratic(A), _power(law)), xi)
    assert convex_service.psi_star(spec, xi).value == pytest.approx(direct.value, abs=1e-8)


@pytest.mark.parametrize("n", [1, 4])
def test_infimal_convolution_matches_direct_conjugate(n, rng):
    A = _spd(rng, n)
    Ainv = np.linalg.inv(A)
    law = PowerLaw(3.0, np.full(n, 0.7))
    F1_star = SmoothFunctional(value=lambda x: 0.5 * float(x @ Ainv @ x), gradient=lambda x: Ainv @ x)
    F2_star = SmoothFunctional(value=law.conjugate, gradient=law.conjugate_gradient)
    for _ in range(5):
        xi = rng.standard_normal(n)
        split = convex_service.infimal_convolution_conjugate(F1_star, F2_star, xi)
        direct = convex_service.conjugate_numeric(_sum(_quadratic(A), _power(law)), xi)
        assert split.value == pytest.approx(direct.value, abs=1e-6)


def test_infimal_convolution_with_plain_callables():
    # (|.|^2/2)* = |.|^2/2 twice: the split halves xi
    half = lambda x: 0.5 * float(x @ x)  # noqa: E731
    res = convex_service.infimal_convolution_conjugate(half, half, np.array([2.0]))
    assert res.value == pytest.approx(1.0, abs=1e-6)


def test_fenchel_young_is_non_negative_on_random_pairs(rng):
    law = PowerLaw(2.5, np.array([1.0, 0.3]))
    for _ in range(10_000):
        v, xi = 2.0 * rng.standard_normal((2, 2))
        gap = convex_service.fenchel_young_gap(law.value, law.conjugate, v, xi)
        assert gap.raw >= -1e-12
        assert gap.gap >= 0.0


def test_fenchel_young_equality_at_the_gradient(rng):
    law = PowerLaw(2.5, np.array([1.0, 0.3]))
    v = rng.standard_normal(2)
    gap = convex_service.fenchel_young_gap(law.value, law.conjugate, v, law.gradient(v))
    assert gap.raw == pytest.approx(0.0, abs=1e-12)


def test_lambda_check_accepts_the_gradient_of_a_convex_energy():
    E = lambda x: 0.5 * float(x @ x)  # noqa: E731
    u = np.array([0.3])
    check = convex_service.lambda_subgradient_check(E, u, u, 0.0, samples=200)
    assert check.passed


def test_lambda_check_rejects_a_wrong_subgradient():
    E = lambda x: 0.5 * float(x @ x)  # noqa: E731
    u = np.array([0.3])
    # slack at v = u + d is d^2/2 - d, most negative at d = 1
    check = convex_service.lambda_subgradient_check(E, u, u + 1.0, 0.0, samples=10, probes=[u + 1.0])
    assert not check.passed
    assert check.worst_slack == pytest.approx(-0.5)


def test_lambda_check_with_defect_covers_a_concave_part():
    E = lambda x: 0.25 * float(np.sum(x ** 4)) - 0.5 * float(x @ x)  # noqa: E731
    u = np.array([0.1, -0.2, 0.3])
    xi = u ** 3 - u
    assert not convex_service.lambda_subgradient_check(E, u, xi, 0.0, samples=500, scale=1.0).passed
    assert convex_service.lambda_subgradient_check(E, u, xi, 0.5, samples=500, scale=1.0).passed


def test_measure_growth_of_a_quadratic_dissipation():
    spec = DissipationSpec(np.diag([1.0, 3.0]), gram_V=np.eye(2))
    c, C = convex_service.measure_growth(spec, np.linalg.norm)
    assert (c, C) == pytest.approx((0.5, 1.5))


def test_dissipation_spec_validation():
    with pytest.raises(ContractViolation):
        DissipationSpec(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ContractViolation):
        DissipationSpec(np.eye(2), mode="b")
    with pytest.raises(ContractViolation):
        DissipationSpec(np.diag([1.0, 0.0]))
    with pytest.raises(ContractViolation):
        PowerLaw(1.0, np.ones(2))


def test_psi_gradient_of_power_law_vanishes_at_zero():
    spec = DissipationSpec(np.eye(3), psi2=PowerLaw(1.5, np.ones(3)), mode="b")
    np.testing.assert_array_equal(convex_service.psi_grad(spec, np.zeros(3)).values, np.zeros(3))
