import numpy as np
import pytest

from chquench.control import AdmissibleSet, optimize
from chquench.grid import norm_l2_spacetime
from chquench.problems import pure_control_problem, tracking_problem
from chquench.quench import (QuenchSchedule, XiLimit, concentration_check,
                             concentration_via_adjoint, default_test_fields, inversions,
                             run_quench, xi_limit_check)


@pytest.fixture(scope="module")
def small_problem():
    return tracking_problem(Nx=8, Ny=4, Nt=8)


@pytest.fixture(scope="module")
def small_report(small_problem):
    return run_quench(small_problem, QuenchSchedule(0.1, 0.25, 3))


@pytest.mark.parametrize("kw", [dict(alpha0=0.0), dict(alpha0=1.5), dict(ratio=1.0),
                                dict(ratio=0.0), dict(count=1), dict(count=2.5)])
def test_schedule_validation(kw):
    with pytest.raises(ValueError):
        QuenchSchedule(**kw)


def test_schedule_values():
    np.testing.assert_allclose(QuenchSchedule().alphas, 0.1 * 0.25 ** np.arange(7), rtol=0)


def test_inversions():
    assert inversions([3, 2, 1]) == 0
    assert inversions([3, 4, 1, 2]) == 2
    assert inversions([]) == 0


def test_pure_control_quench_has_zero_gaps():
    problem = pure_control_problem()
    rep = run_quench(problem, QuenchSchedule(0.1, 0.25, 3))
    assert np.all(rep.control_gaps <= 1e-12)
    assert all(norm_l2_spacetime(m.u, problem.grid) <= 1e-8 for m in rep.members)


def test_tiny_alpha_members_nearly_coincide(small_problem):
    rep = run_quench(small_problem, QuenchSchedule(1e-8, 0.25, 2))
    assert rep.last.control_gap <= 1e-6
    assert rep.members[0].stationary and rep.last.stationary


def test_report_fields(small_report):
    rep = small_report
    assert [m.n for m in rep.members] == [0, 1, 2]
    assert np.isnan(rep.members[0].state_gap)
    assert rep.state_gaps.shape == rep.control_gaps.shape == (2,)
    assert rep.nonstationary == []
    costs = [m.J_adapted for m in rep.members]
    assert all(np.isfinite(costs))
    assert set(rep.uniform_bounds()) == {"mu_sup", "xi_sup", "q_sup"}
    assert rep.concentration_ratios().shape == (3,)
    for m in rep.members:
        assert m.s_bulk >= 0 and m.s_surf >= 0
        assert m.id_residual <= 1e-12 * (1 + m.q_sup)


def test_concentration_two_ways_agree(small_report, small_problem):
    for m in small_report.members:
        c2 = concentration_via_adjoint(m.adj, m.traj, small_report.test_fields,
                                       small_problem.pot)
        assert m.concentration == pytest.approx(c2, rel=1e-12, abs=1e-14)


def test_concentration_zero_when_multiplier_vanishes(small_report, small_problem):
    m = small_report.last
    adj = m.adj
    zero = type(adj)(adj.alpha, adj.p, 0 * adj.q, 0 * adj.lam, adj.sensitivity)
    assert concentration_check(zero, m.traj, small_report.test_fields) == 0.0
    assert concentration_via_adjoint(zero, m.traj, small_report.test_fields,
                                     small_problem.pot) == 0.0


def test_test_fields_vanish_initially(small_problem):
    for w in default_test_fields(small_problem.grid):
        assert np.all(w[0] == 0)


def test_xi_limit_against_itself(small_report):
    rep = small_report
    x = xi_limit_check(rep, traj0=rep.last.traj)
    assert isinstance(x, XiLimit)
    assert np.all(x.weak_gaps == 0.0)
    assert x.violation <= 1e-12
    assert float(x) == x.value


def test_warm_start_matches_cold_start(small_problem, small_report):
    m = small_report.members[1]
    u_ref = small_report.u_ref
    cold = optimize(small_problem, m.alpha, small_problem.zero_control(), u_ref=u_ref,
                    tol_stat=1e-9, max_iters=2000)
    warm = optimize(small_problem, m.alpha, m.u, u_ref=u_ref, tol_stat=1e-9, max_iters=2000)
    assert warm.cost == pytest.approx(cold.cost, rel=1e-8)


def test_explicit_reference_skips_incumbent(small_problem):
    u_ref = small_problem.zero_control()
    rep = run_quench(small_problem, QuenchSchedule(0.1, 0.5, 2), u_ref=u_ref)
    assert rep.incumbent is None
    np.testing.assert_array_equal(rep.u_ref, u_ref)
