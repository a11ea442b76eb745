"""Deep-quench continuation: optimal controls along a decreasing alpha schedule.

The driver works in two passes.  Pass 1 minimizes the plain cost at the
largest alpha and produces an incumbent control ``u_ref``.  Pass 2 walks the
schedule on the adapted cost (plain cost plus ``1/2 ||u - u_ref||^2``),
warm-starting each member from its predecessor, and finally integrates the
obstacle (``alpha = 0``) state with the last control as the limit reference.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .adjoint import AdjointTrajectory, complementarity_products
from .control import ControlProblem, OptimizeResult, optimize, project
from .cost import cost
from .grid import StripGrid, inner_l2_spacetime, norm_l2_spacetime, surface_view
from .physics import PotentialSet
from .state import StateTrajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuenchSchedule:
    """Geometric schedule ``alpha_n = alpha0 * ratio**n`` for ``n = 0..count-1``."""

    alpha0: float = 0.1
    ratio: float = 0.25
    count: int = 7

    def __post_init__(self):
        if not 0.0 < self.alpha0 <= 1.0:
            raise ValueError("alpha0 must lie in (0, 1]")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must lie in (0, 1)")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError("count must be an integer >= 2")

    @property
    def alphas(self) -> np.ndarray:
        return self.alpha0 * self.ratio ** np.arange(self.count)


def default_test_fields(grid: StripGrid) -> list[np.ndarray]:
    """Five smooth space-time fields vanishing at ``t = 0``."""
    X, Y = grid.mesh()
    s = grid.t[:, None, None] / grid.T
    kx, ky = 2 * np.pi / grid.Lx, np.pi / grid.Ly
    shapes = [np.ones_like(X), np.cos(kx * X), np.sin(kx * X) * np.cos(ky * Y),
              np.cos(ky * Y), np.cos(2 * kx * X) * np.sin(0.5 * ky * Y)]
    return [s * f for f in shapes]


def concentration_check(adj: AdjointTrajectory, traj: StateTrajectory,
                        test_fields: Sequence[np.ndarray]) -> float:
    """``sum_w |<lam (1-rho^2), w>_Q| + |<lamG (1-rhoG^2), wG>_Sigma|``."""
    grid = traj.grid
    wt = lambda r: (1.0 - r) * (1.0 + r)  # noqa: E731
    c = 0.0
    for w in test_fields:
        c += abs(inner_l2_spacetime(adj.lam * wt(traj.rho), w, grid))
        c += abs(inner_l2_spacetime(adj.lamG * wt(traj.rhoG), surface_view(w), grid))
    return c


def concentration_via_adjoint(adj: AdjointTrajectory, traj: StateTrajectory,
                              test_fields: Sequence[np.ndarray], pot: PotentialSet) -> float:
    """Same quantity as :func:`concentration_check` through ``lam (1-rho^2) = 2 phi q``."""
    grid = traj.grid
    two_phi = 2.0 * pot.phi(adj.alpha)
    c = 0.0
    for w in test_fields:
        c += abs(two_phi * inner_l2_spacetime(adj.q, w, grid))
        c += abs(two_phi * inner_l2_spacetime(adj.qG, surface_view(w), grid))
    return c


@dataclass
class QuenchMember:
    n: int
    alpha: float
    u: np.ndarray
    J: float
    J_adapted: float
    residual: float
    stationary: bool
    iterations: int
    state_gap: float
    control_gap: float
    s_bulk: float
    s_surf: float
    id_residual: float
    q_sup: float
    concentration: float
    concentration_q: float
    phi: float
    mu_sup: float
    xi_sup: float
    rho_sup: float
    traj: StateTrajectory = field(repr=False)
    adj: AdjointTrajectory = field(repr=False)
    history: list = field(repr=False, default_factory=list)

    @property
    def xi(self) -> np.ndarray:
        return self.traj.xi

    SCALARS = ("n", "alpha", "J", "J_adapted", "residual", "stationary", "iterations",
               "state_gap", "control_gap", "s_bulk", "s_surf", "id_residual", "q_sup",
               "concentration", "concentration_q", "phi", "mu_sup", "xi_sup", "rho_sup")

    def scalars(self) -> dict:
        return {k: getattr(self, k) for k in self.SCALARS}


@dataclass
class QuenchReport:
    schedule: QuenchSchedule
    u_ref: np.ndarray
    incumbent: Optional[OptimizeResult]
    members: list
    traj0: StateTrajectory
    limit_gap: float
    test_fields: list = field(repr=False, default_factory=list)

    @property
    def last(self) -> QuenchMember:
        return self.members[-1]

    @property
    def state_gaps(self) -> np.ndarray:
        return np.array([m.state_gap for m in self.members[1:]])

    @property
    def control_gaps(self) -> np.ndarray:
        return np.array([m.control_gap for m in self.members[1:]])

    @property
    def nonstationary(self) -> list:
        return [m.n for m in self.members if not m.stationary]

    def concentration_ratios(self) -> np.ndarray:
        return np.array([m.concentration / m.phi for m in self.members])

    def uniform_bounds(self) -> dict:
        """Sup norms across members; these must not grow as alpha decreases."""
        return {k: np.array([getattr(m, k) for m in self.members])
                for k in ("mu_sup", "xi_sup", "q_sup")}


def inversions(seq) -> int:
    """Number of increases in a sequence that should be nonincreasing."""
    seq = np.asarray(seq, float)
    return int(np.sum(np.diff(seq) > 0))


def _member(n, alpha, res: OptimizeResult, prev_traj, prev_u, problem, fields):
    grid, pot = problem.grid, problem.pot
    traj, adj = res.traj, res.adj
    s_bulk, s_surf, id_res = complementarity_products(adj, traj, pot)
    if prev_traj is None:
        sgap = cgap = np.nan
    else:
        sgap = norm_l2_spacetime(traj.rho - prev_traj.rho, grid)
        cgap = norm_l2_spacetime(res.u - prev_u, grid)
    return QuenchMember(
        n=n, alpha=float(alpha), u=res.u, J=cost(traj, res.u, problem.weights),
        J_adapted=res.cost, residual=res.residual, stationary=res.stationary,
        iterations=len(res.history) - 1, state_gap=sgap, control_gap=cgap,
        s_bulk=s_bulk, s_surf=s_surf, id_residual=id_res,
        q_sup=float(np.max(np.abs(adj.q))),
        concentration=concentration_check(adj, traj, fields),
        concentration_q=concentration_via_adjoint(adj, traj, fields, pot),
        phi=pot.phi(alpha), mu_sup=float(np.max(np.abs(traj.mu))),
        xi_sup=float(np.max(np.abs(traj.xi))), rho_sup=float(np.max(np.abs(traj.rho))),
        traj=traj, adj=adj, history=res.history)


def run_quench(problem: ControlProblem, schedule: QuenchSchedule, u_ref=None,
               tol_stat: float = 1e-6, max_iters: int = 500,
               test_fields: Optional[Sequence[np.ndarray]] = None) -> QuenchReport:
    """Continuation along ``schedule`` on the adapted cost.

    Without ``u_ref`` the incumbent is computed first by minimizing the plain
    cost at ``schedule.alpha0`` starting from the projection of zero.
    Members that stop short of ``tol_stat`` are flagged and the walk goes on.
    """
    grid = problem.grid
    fields = list(test_fields) if test_fields is not None else default_test_fields(grid)
    incumbent = None
    if u_ref is None:
        u0 = project(problem.zero_control(), problem.admissible, grid)
        incumbent = optimize(problem, schedule.alpha0, u0, tol_stat=tol_stat,
                             max_iters=max_iters)
        if not incumbent.stationary:
            log.warning("incumbent not stationary (residual %.3e)", incumbent.residual)
        u_ref = incumbent.u
    u_ref = np.asarray(u_ref, float)

    members = []
    u_prev, traj_prev = u_ref, None
    for n, alpha in enumerate(schedule.alphas):
        res = optimize(problem, alpha, u_prev, u_ref=u_ref, tol_stat=tol_stat,
                       max_iters=max_iters)
        if not res.stationary:
            log.warning("member %d (alpha=%.3e) not stationary, residual %.3e",
                        n, alpha, res.residual)
        m = _member(n, alpha, res, traj_prev, u_prev, problem, fields)
        log.info("member %d alpha=%.3e J=%.6e residual=%.2e iters=%d", n, alpha, m.J,
                 m.residual, m.iterations)
        members.append(m)
        u_prev, traj_prev = res.u, res.traj

    traj0 = problem.state(members[-1].u, 0.0)
    gap0 = norm_l2_spacetime(members[-1].traj.rho - traj0.rho, grid)
    return QuenchReport(schedule, u_ref, incumbent, members, traj0, gap0, fields)


@dataclass
class XiLimit:
    """Outcome of :func:`xi_limit_check`."""

    violation: float
    weak_gaps: np.ndarray

    @property
    def value(self) -> float:
        return float(self.violation + np.max(self.weak_gaps, initial=0.0))

    def __float__(self) -> float:
        return self.value


def xi_limit_check(report: QuenchReport, traj0: Optional[StateTrajectory] = None,
                   tol: float = 0.0, test_fields=None) -> XiLimit:
    """Limit diagnostics for the multiplier of the smallest-alpha member.

    ``violation`` is the largest amount by which ``<xi, rho - z>`` (bulk plus
    boundary) falls below ``-tol`` for constant ``z`` in ``{-1, -1/2, 0, 1/2,
    1}``.  ``weak_gaps`` holds ``|<xi_N - xi_0, w>|`` for the test fields.
    """
    traj0 = report.traj0 if traj0 is None else traj0
    trajN = report.last.traj
    grid = trajN.grid
    fields = report.test_fields if test_fields is None else test_fields
    viol = 0.0
    for z in (-1.0, -0.5, 0.0, 0.5, 1.0):
        val = (inner_l2_spacetime(trajN.xi, trajN.rho - z, grid)
               + inner_l2_spacetime(trajN.xiG, trajN.rhoG - z, grid))
        viol = max(viol, -tol - val)
    dxi = trajN.xi - traj0.xi
    gaps = np.array([abs(inner_l2_spacetime(dxi, w, grid))
                     + abs(inner_l2_spacetime(surface_view(dxi), surface_view(w), grid))
                     for w in fields])
    return XiLimit(float(viol), gaps)
