import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chquench.grid import StripGrid
from chquench.physics import (EPS_SAFE, INACTIVE, LOWER, UPPER, AssumptionError, DomainError,
                              ObstacleMultiplier, PotentialSet, Violation, classify_multipliers,
                              default_potentials, free_energy, h, h_double_prime, h_prime, phi,
                              subdifferential_check)

interior = st.floats(-1 + 1e-6, 1 - 1e-6, allow_nan=False)


def test_h_values():
    assert h(0.0) == 0.0 and h_prime(0.0) == 0.0 and h_double_prime(0.0) == 2.0
    assert h(1.0) == pytest.approx(2 * math.log(2), rel=1e-15)
    assert h(-1.0) == pytest.approx(2 * math.log(2), rel=1e-15)
    assert h_prime(0.5) == pytest.approx(math.log(3), rel=1e-15)
    assert h_double_prime(0.5) == pytest.approx(8 / 3, rel=1e-15)


def test_h_prime_matches_log_form_and_finite_difference():
    y = np.linspace(-0.99, 0.99, 41)
    np.testing.assert_allclose(h_prime(y), np.log((1 + y) / (1 - y)), rtol=1e-13, atol=1e-15)
    eps = 1e-6
    np.testing.assert_allclose((h(y + eps) - h(y - eps)) / (2 * eps), h_prime(y), rtol=1e-7,
                               atol=1e-9)
    np.testing.assert_allclose((h_prime(y + eps) - h_prime(y - eps)) / (2 * eps),
                               h_double_prime(y), rtol=1e-7)


@pytest.mark.parametrize("f", [h_prime, h_double_prime])
@pytest.mark.parametrize("y", [1.0, -1.0, 1 - EPS_SAFE / 2, 1.5])
def test_derivatives_reject_bounds(f, y):
    with pytest.raises(DomainError) as ei:
        f(y)
    assert ei.value.value == y


def test_h_rejects_outside_interval():
    with pytest.raises(DomainError):
        h(1.0 + 1e-9)


@given(interior)
def test_h_symmetry_and_convexity(y):
    assert h_prime(-y) == -h_prime(y)
    assert h_double_prime(-y) == h_double_prime(y)
    assert h_double_prime(y) >= 2.0
    assert h(y) >= 0.0


def test_phi():
    assert phi(1.0) == 1.0
    assert phi(0.25) == 0.25
    assert phi(0.1, 2) == pytest.approx(0.01, rel=1e-15)
    a = np.linspace(0.01, 1, 50)
    assert np.all(np.diff([phi(x, 1.5) for x in a]) > 0)
    for bad in (0.0, -0.1):
        with pytest.raises(ValueError):
            phi(bad)


def test_deep_quench_pointwise_limit():
    assert phi(1e-8) * h_prime(0.999) <= 1e-6


def test_default_potentials_values():
    pot = default_potentials()
    assert pot.g(0.0) == 1.0 and pot.g(1.0) == 0.5 and pot.g(-1.0) == 0.5
    assert np.all(pot.d2g(np.linspace(-1, 1, 11)) == -1.0)
    assert pot.pi(0.3) == pytest.approx(-0.3)
    assert pot.piG(0.3) == pytest.approx(-0.3)
    assert pot.p_exponent == 1.0
    assert pot.pi_antiderivative(1.0) == pytest.approx(-0.5)


def test_potential_validation_rejects_negative_g():
    with pytest.raises(AssumptionError, match=r"\(A2\): g negative at rho=-1"):
        PotentialSet.from_polynomials([0.0, 1.0], [0.0, -1.0], [0.0, -1.0])


def test_potential_validation_rejects_convex_g():
    with pytest.raises(AssumptionError, match=r"\(A2\)"):
        PotentialSet.from_polynomials([1.0, 0.0, 0.5], [0.0, -1.0], [0.0, -1.0])


def test_simpson_fallback_matches_closed_form():
    pot = default_potentials()
    custom = PotentialSet(g=pot.g, dg=pot.dg, d2g=pot.d2g, d3g=pot.d3g,
                          pi=lambda r: np.sin(r), dpi=np.cos, piG=pot.piG, dpiG=pot.dpiG)
    r = np.linspace(-1, 1, 9)
    np.testing.assert_allclose(custom.pi_antiderivative(r), 1 - np.cos(r), atol=1e-10)


@pytest.mark.parametrize("rho, xi, regime", [(0.2, 0.0, INACTIVE), (1.0, 3.7, UPPER),
                                             (-1.0, -2.0, LOWER), (1.0, 0.0, UPPER)])
def test_subdifferential_regimes(rho, xi, regime):
    res = subdifferential_check(rho, xi, 0.0)
    assert isinstance(res, ObstacleMultiplier) and res.regime == regime and res.value == xi


@pytest.mark.parametrize("rho, xi", [(0.0, 0.5), (1.0, -1.0), (-1.0, 0.3), (1.2, 0.0)])
def test_subdifferential_violations(rho, xi):
    assert isinstance(subdifferential_check(rho, xi, 1e-8), Violation)


@given(st.floats(-1, 1), st.floats(-10, 10), st.floats(0, 1e-3))
def test_subdifferential_invariants(rho, xi, tol):
    res = subdifferential_check(rho, xi, tol)
    if isinstance(res, ObstacleMultiplier):
        if res.regime == INACTIVE:
            assert abs(res.value) <= tol
        elif res.regime == UPPER:
            assert res.value >= -tol and rho >= 1 - tol
        else:
            assert res.value <= tol and rho <= -1 + tol


def test_classify_reports_nodes():
    rho = np.array([[0.0, 1.0], [0.5, -1.0]])
    xi = np.array([[0.0, 2.0], [0.1, 0.0]])
    rep = classify_multipliers(rho, xi, 1e-10)
    assert not rep.ok
    assert [v.node for v in rep.violations] == [(1, 0)]
    assert rep.regimes[0, 1] == UPPER and rep.regimes[1, 1] == LOWER


def test_free_energy_examples():
    pot = default_potentials()
    g = StripGrid(8, 4, 2.0, 1.0)
    z = np.zeros(g.bulk_shape)
    zG = np.zeros(g.surface_shape)
    assert free_energy(z, None, z, zG, pot, g) == 0.0
    one = np.ones(g.bulk_shape)
    expected = -(g.Lx * g.Ly + 2 * g.Lx) / 2
    assert free_energy(one, None, z, zG, pot, g) == pytest.approx(expected, rel=1e-13)
    bad = one.copy()
    bad[2, 2] = 1.0 + 1e-9
    assert free_energy(bad, None, z, zG, pot, g) == math.inf
