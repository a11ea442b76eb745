import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from chquench.grid import StripGrid, surface_view
from chquench.physics import (EPS_SAFE, UPPER, PotentialSet, classify_multipliers,
                              default_potentials, h_prime)
from chquench.problems import default_initial_data
from chquench.state import (SolveError, SolverOptions, StepFailure, StepLog, energy_ledger,
                            multiplier_signs_ok, solve_state, step_mu, step_rho_obstacle,
                            step_rho_regularized, validate_initial_data)

SAFE = 1.0 - EPS_SAFE


def const_control(grid, c):
    return np.full((grid.Nt + 1,) + grid.surface_shape, float(c))


def test_global_fixed_point(pot):
    g = StripGrid(8, 4, 2.0, 1.0, 5, 1.0)
    z = np.zeros(g.bulk_shape)
    for alpha in (0.1, 0.0):
        tr = solve_state(const_control(g, 0), alpha, z, z, g, pot)
        assert np.all(tr.mu == 0) and np.all(tr.rho == 0) and np.all(tr.xi == 0)


def test_regularized_step_symmetric_fixed_point(pot):
    g = StripGrid(8, 4)
    z = np.zeros(g.bulk_shape)
    r = step_rho_regularized(z, z, np.zeros(g.surface_shape), 0.3, g, pot)
    assert np.max(np.abs(r)) <= 1e-14


@pytest.mark.parametrize("alpha, c", [(0.2, 1.5), (0.05, -3.0), (1.0, 0.7)])
def test_regularized_step_matches_two_unknown_reduction(pot, alpha, c):
    # Ny = 2 and data constant in x: one interior value a, one boundary value b
    dt = 0.1
    g = StripGrid(4, 2, 1.0, 1.0, 1, dt)
    a0, b0, m0 = 0.1, -0.2, 0.8
    rho0 = np.full(g.bulk_shape, a0)
    rho0[:, [0, 2]] = b0
    mu0 = np.full(g.bulk_shape, m0)
    ph, dy = pot.phi(alpha), g.dy
    s_int = a0 / dt + m0 * pot.dg(a0) - pot.pi(a0)
    s_bnd = b0 / dt + c - pot.piG(b0)

    def a_of(b):
        f = lambda a: a / dt + 2 * (a - b) / dy**2 + ph * h_prime(a) - s_int
        return brentq(f, -SAFE, SAFE, xtol=1e-15, rtol=1e-15)

    fb = lambda b: b / dt + 2 * (b - a_of(b)) / dy + ph * h_prime(b) - s_bnd
    b = brentq(fb, -SAFE, SAFE, xtol=1e-15, rtol=1e-15)
    a = a_of(b)
    r = step_rho_regularized(rho0, mu0, np.full(g.surface_shape, c), alpha, g, pot)
    np.testing.assert_allclose(r[:, 1], a, atol=1e-10)
    np.testing.assert_allclose(surface_view(r), b, atol=1e-10)
    assert np.sign(b - b0) == np.sign(c)


def test_newton_damping_near_upper_bound():
    pot = default_potentials()
    g = StripGrid(8, 4, 2.0, 1.0, 1, 1.0)
    rho0 = np.full(g.bulk_shape, 1 - 1e-6)
    log = StepLog()
    r = step_rho_regularized(rho0, np.zeros(g.bulk_shape), np.full(g.surface_shape, 20.0), 1.0,
                             g, pot, log_=log)
    assert log.damping_events >= 1
    assert np.max(np.abs(r)) <= SAFE


def test_newton_failure_reports_history(pot):
    g = StripGrid(8, 4, 2.0, 1.0, 1, 1.0)
    with pytest.raises(StepFailure) as ei:
        step_rho_regularized(np.zeros(g.bulk_shape), np.zeros(g.bulk_shape),
                             np.full(g.surface_shape, 500.0), 1e-3, g, pot,
                             SolverOptions(max_newton=5))
    assert ei.value.kind == "newton" and len(ei.value.history) == 6


def projected_jacobi(A, b, iters=20000):
    """Nodewise projected equation r_i = clip((b_i - sum_{j!=i} A_ij r_j) / A_ii, -1, 1)."""
    d = np.diag(A)
    r = np.zeros_like(b)
    for _ in range(iters):
        r_new = np.clip((b - (A @ r - d * r)) / d, -1.0, 1.0)
        if np.max(np.abs(r_new - r)) < 1e-15:
            break
        r = r_new
    return r_new


def test_pdas_matches_projected_oracle(pot, rng):
    g = StripGrid(4, 2, 1.0, 1.0, 1, 0.01)
    dt = g.dt
    rho0 = rng.uniform(-0.9, 0.9, g.bulk_shape)
    mu0 = rng.uniform(0, 1, g.bulk_shape)
    uG = np.stack([np.full(4, -300.0), np.full(4, 300.0)])
    uG[1, 0] = 5.0
    r, xi, (up, lo) = step_rho_obstacle(rho0, mu0, uG, g, pot, dt=dt)
    A = (np.eye(g.n_bulk) / dt + g.rho_operator.toarray())
    b = (rho0 / dt + mu0 * pot.dg(rho0) - pot.pi(rho0))
    surface_view(b)[...] = surface_view(rho0) / dt + uG - pot.piG(surface_view(rho0))
    oracle = projected_jacobi(A, b.ravel()).reshape(g.bulk_shape)
    assert up.any() and lo.any() and (~(up | lo)).any()
    np.testing.assert_allclose(r, oracle, atol=1e-10, rtol=0)
    # the multiplier closes the equation and has the right signs
    np.testing.assert_allclose((A @ r.ravel()).reshape(g.bulk_shape) + xi, b, atol=1e-9)
    assert classify_multipliers(r, xi, 1e-10).ok


def test_pdas_unconstrained_regime_is_one_linear_solve(pot, small_grid, small_init):
    g = small_grid
    mu0, rho0 = small_init
    log = StepLog()
    r, xi, (up, lo) = step_rho_obstacle(rho0, mu0, np.zeros(g.surface_shape), g, pot, log_=log)
    assert not up.any() and not lo.any() and np.all(xi == 0)
    assert log.pdas_iters == 1
    rr = step_rho_regularized(rho0, mu0, np.zeros(g.surface_shape), 1e-12, g, pot)
    np.testing.assert_allclose(r, rr, atol=1e-9)


def test_obstacle_saturation_regimes(pot):
    g = StripGrid(8, 4, 2.0, 1.0, 20, 2.0)
    mu0 = np.zeros(g.bulk_shape)
    _, rho0 = default_initial_data(g)
    tr = solve_state(const_control(g, 5.0), 0.0, mu0, rho0, g, pot)
    assert np.all(tr.rhoG[-1] == 1.0)
    assert np.all(tr.xiG[-1] >= 0) and np.any(tr.xiG[-1] > 0)
    rep = classify_multipliers(tr.rho[-1], tr.xi[-1], 1e-10)
    assert rep.ok and np.all(surface_view(rep.regimes) == UPPER)
    assert np.max(np.abs(tr.rho)) <= 1.0
    assert multiplier_signs_ok(tr)


def test_mu_step_constant_preserved_when_rho_frozen(pot, small_grid, rng):
    rho = rng.uniform(-0.8, 0.8, small_grid.bulk_shape)
    mu = np.full(small_grid.bulk_shape, 2.5)
    np.testing.assert_allclose(step_mu(mu, rho, rho, small_grid, pot), 2.5, rtol=1e-13)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.3))
def test_mu_step_nonnegative(seed, amp):
    pot = default_potentials()
    g = StripGrid(8, 4, 2.0, 1.0, 4, 1.0)
    r = np.random.default_rng(seed)
    rho_a = r.uniform(-0.9, 0.9, g.bulk_shape)
    rho_b = np.clip(rho_a + amp * r.standard_normal(g.bulk_shape), -1, 1)
    mu = r.uniform(0, 2, g.bulk_shape) * (r.random(g.bulk_shape) < 0.7)
    try:
        out = step_mu(mu, rho_a, rho_b, g, pot)
    except StepFailure as exc:
        assert exc.kind == "guard"
        return
    assert out.min() >= 0.0


def test_mu_heat_mode_decay_first_order_in_dt(pot):
    # rho == 0 frozen: (1 + 2 g(0)) mu_t = Lap mu, so a cosine mode decays like
    # exp(-k^2 t / 3)
    errs = []
    for Nt in (10, 20, 40):
        g = StripGrid(256, 2, 1.0, 1.0, Nt, 0.2)
        k = 2 * np.pi / g.Lx
        X, _ = g.mesh()
        mu0 = 1 + 0.5 * np.cos(k * X)
        tr = solve_state(const_control(g, 0), 0.1, mu0, np.zeros(g.bulk_shape), g, pot)
        amp = 2 * np.mean(tr.mu[-1][:, 0] * np.cos(k * g.x))
        exact = 0.5 * np.exp(-k**2 * g.T / 3)
        errs.append(abs(amp - exact) / exact)
        # backward Euler leading error: lam^2 dt T / 2 with lam = k^2 / 3
        lam = k**2 / 3
        assert errs[-1] == pytest.approx(lam**2 * g.dt * g.T / 2, rel=0.15)
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 1.7) and np.all(ratios < 2.3), errs


def test_guard_fires_and_halving_recovers():
    pot = PotentialSet.from_polynomials([1.0, 0.0, -1.0], [0.0, -1.0], [0.0, -1.0])
    g = StripGrid(8, 2, 2.0, 0.25, 1, 1.0)
    rho0 = np.full(g.bulk_shape, -0.9)
    tr = solve_state(const_control(g, 5.0), 0.3, np.ones(g.bulk_shape), rho0, g, pot)
    assert tr.guard_events >= 1 and tr.halvings >= 1
    assert tr.stats["substeps"][0] == 2 ** tr.halvings
    assert tr.mu.min() >= 0.0
    assert np.max(np.abs(tr.rho)) <= SAFE


def test_budget_exhaustion_raises(pot):
    g = StripGrid(8, 4, 2.0, 1.0, 1, 1.0)
    with pytest.raises(SolveError):
        solve_state(const_control(g, 500.0), 1e-3, np.ones(g.bulk_shape),
                    np.zeros(g.bulk_shape), g, pot, SolverOptions(dt_halving_budget=2))


@pytest.mark.parametrize("alpha, c", [(0.5, 3.0), (0.1, -1.0), (1e-3, 0.5)])
def test_regularized_runs_stay_strictly_inside(pot, alpha, c):
    g = StripGrid(16, 8, 2.0, 1.0, 20, 1.0)
    mu0, rho0 = default_initial_data(g)
    u = const_control(g, c) * np.cos(2 * np.pi * g.x / g.Lx)
    tr = solve_state(u, alpha, mu0, rho0, g, pot)
    assert np.max(np.abs(tr.rho)) <= SAFE
    np.testing.assert_array_equal(tr.xi, pot.phi(alpha) * h_prime(tr.rho))
    assert np.all(np.sign(tr.xi) == np.sign(tr.rho))
    assert tr.guard_events == 0 and tr.mu.min() >= 0.0


def test_obstacle_runs_bounds_and_multipliers(pot):
    g = StripGrid(16, 8, 2.0, 1.0, 20, 1.0)
    mu0, rho0 = default_initial_data(g)
    u = const_control(g, 15.0) * np.cos(2 * np.pi * g.x / g.Lx)
    tr = solve_state(u, 0.0, mu0, rho0, g, pot)
    assert np.max(np.abs(tr.rho)) <= 1.0
    assert classify_multipliers(tr.rho, tr.xi, 1e-10).ok
    assert multiplier_signs_ok(tr)
    assert np.any(np.abs(tr.rho) == 1.0)


def test_trace_aliasing_and_determinism(pot, small_grid, small_init):
    mu0, rho0 = small_init
    u = const_control(small_grid, 0.4)
    a = solve_state(u, 0.05, mu0, rho0, small_grid, pot)
    b = solve_state(u, 0.05, mu0, rho0, small_grid, pot)
    assert np.shares_memory(a.rhoG, a.rho)
    assert a.rho.tobytes() == b.rho.tobytes() and a.mu.tobytes() == b.mu.tobytes()


def test_initial_data_validation(small_grid):
    g = small_grid
    mu0, rho0 = default_initial_data(g)
    bad_mu = mu0.copy()
    bad_mu[1, 1] = -1e-3
    with pytest.raises(ValueError, match=r"\(A1\): mu0 >= 0"):
        validate_initial_data(bad_mu, rho0, 0.1, g)
    edge = rho0.copy()
    edge[0, 0] = 1.0
    validate_initial_data(mu0, edge, 0.0, g)
    with pytest.raises(ValueError, match=r"\(A1\)"):
        validate_initial_data(mu0, edge, 0.1, g)
    edge[0, 0] = 1.01
    with pytest.raises(ValueError, match=r"\(A1\)"):
        validate_initial_data(mu0, edge, 0.0, g)


def test_energy_ledger_zero_for_zero_mu(pot, small_grid):
    g = small_grid
    _, rho0 = default_initial_data(g)
    tr = solve_state(const_control(g, 0.3), 0.1, np.zeros(g.bulk_shape), rho0, g, pot)
    L = energy_ledger(tr, pot)
    assert np.all(L.E_mu == 0) and np.all(L.D_mu == 0) and np.all(L.drift == 0)


def test_energy_identity_exact_with_frozen_rho(pot):
    g = StripGrid(16, 8, 2.0, 1.0, 20, 1.0)
    mu0, _ = default_initial_data(g)
    tr = solve_state(const_control(g, 0), 0.1, mu0, np.zeros(g.bulk_shape), g, pot)
    assert np.all(tr.rho == 0)
    L = energy_ledger(tr, pot)
    assert np.max(np.abs(L.drift_scheme)) <= 1e-10 * L.E_mu[0]
    # the plain balance misses exactly the backward-Euler dissipation
    np.testing.assert_allclose(L.drift, -L.N_mu, atol=1e-12 * L.E_mu[0])


def test_energy_drift_first_order(pot):
    drifts = []
    for Nt in (10, 20, 40):
        g = StripGrid(16, 8, 2.0, 1.0, Nt, 1.0)
        mu0, rho0 = default_initial_data(g)
        u = const_control(g, 0.5) * np.cos(2 * np.pi * g.x / g.Lx)
        L = energy_ledger(solve_state(u, 0.1, mu0, rho0, g, pot), pot)
        drifts.append(np.max(np.abs(L.drift)))
    s = np.log2(np.array(drifts[:-1]) / np.array(drifts[1:]))
    assert np.all(s >= 0.9), (drifts, s)
