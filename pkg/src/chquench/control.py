"""Boundary control: admissible box, reduced gradient, projected gradient.

Controls are arrays of shape ``(Nt+1, 2, Nx)``.  All inner products and
norms of controls are the discrete ``L2(Sigma)`` ones of
:func:`chquench.grid.inner_l2_spacetime`, the same quadrature as the cost.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adjoint import AdjointTrajectory, solve_adjoint
from .cost import CostWeights, adapted_cost, cost, cost_terms  # noqa: F401  (re-exported)
from .grid import StripGrid, inner_l2_spacetime, norm_l2_spacetime
from .physics import AssumptionError, PotentialSet
from .state import SolveError, SolverOptions, StateTrajectory, solve_state

log = logging.getLogger(__name__)


@dataclass
class AdmissibleSet:
    """Box ``u_lower <= u <= u_upper``; ``R0`` is monitored, not enforced."""

    u_lower: object
    u_upper: object
    R0: float = np.inf

    def __post_init__(self):
        lo, hi = np.asarray(self.u_lower, float), np.asarray(self.u_upper, float)
        if np.any(lo > hi):
            raise AssumptionError("(A3): u_lower <= u_upper violated, admissible set empty")
        if not self.R0 > 0:
            raise AssumptionError("(A3): R0 must be positive")

    def bounds(self, grid: StripGrid):
        shape = (grid.Nt + 1,) + grid.surface_shape
        return (np.broadcast_to(np.asarray(self.u_lower, float), shape),
                np.broadcast_to(np.asarray(self.u_upper, float), shape))

    def contains(self, u, grid: StripGrid) -> bool:
        lo, hi = self.bounds(grid)
        return bool(np.all(u >= lo) and np.all(u <= hi))


def control_norm_proxy(u, grid: StripGrid) -> float:
    """Discrete ``H1(0,T; L2(Gamma)) + L_inf(Sigma)`` norm of a control."""
    u = np.asarray(u, float)
    du = np.diff(u, axis=0) / grid.dt
    h1 = inner_l2_spacetime(u, u, grid) + grid.dt * grid.dx * float(np.sum(du**2))
    return float(np.sqrt(h1) + np.max(np.abs(u)))


def project(u, A: AdmissibleSet, grid: StripGrid) -> np.ndarray:
    """Nodewise clamp onto the box (the ``L2(Sigma)`` projection)."""
    lo, hi = A.bounds(grid)
    v = np.clip(np.asarray(u, float), lo, hi)
    if np.isfinite(A.R0) and control_norm_proxy(v, grid) > A.R0:
        log.warning("control norm proxy %.3g exceeds R0 = %.3g",
                    control_norm_proxy(v, grid), A.R0)
    return v


def reduced_gradient(adj: AdjointTrajectory, u, w: CostWeights, adapted: bool = False,
                     u_ref=None) -> np.ndarray:
    """``L2(Sigma)`` representative of the derivative of the reduced cost.

    ``boundary adjoint + beta6 u`` (``+ (u - u_ref)`` for the adapted cost).
    """
    u = np.asarray(u, float)
    g = adj.sensitivity + w.beta6 * u
    if adapted:
        if u_ref is None:
            raise ValueError("adapted gradient needs u_ref")
        g = g + (u - np.asarray(u_ref, float))
    return g


def stationarity_residual(u, g, A: AdmissibleSet, grid: StripGrid,
                          tau_probe: float = 1.0) -> float:
    """``||u - P(u - tau g)|| / tau``; zero iff the box variational inequality holds."""
    u = np.asarray(u, float)
    lo, hi = A.bounds(grid)
    return norm_l2_spacetime(u - np.clip(u - tau_probe * g, lo, hi), grid) / tau_probe


@dataclass
class ControlProblem:
    """Everything needed to evaluate the reduced cost ``u -> J(S(u), u)``."""

    grid: StripGrid
    pot: PotentialSet
    weights: CostWeights
    admissible: AdmissibleSet
    mu0: np.ndarray
    rho0: np.ndarray
    opts: SolverOptions = field(default_factory=SolverOptions)

    def state(self, u, alpha: float) -> StateTrajectory:
        return solve_state(u, alpha, self.mu0, self.rho0, self.grid, self.pot, self.opts)

    def value(self, u, alpha: float, u_ref=None) -> float:
        traj = self.state(u, alpha)
        if u_ref is None:
            return cost(traj, u, self.weights)
        return adapted_cost(traj, u, self.weights, u_ref)

    def value_and_gradient(self, u, alpha: float, u_ref=None):
        """Reduced (possibly adapted) cost, its gradient, and the state and adjoint."""
        traj = self.state(u, alpha)
        adj = solve_adjoint(traj, self.weights, self.pot)
        if u_ref is None:
            J = cost(traj, u, self.weights)
        else:
            J = adapted_cost(traj, u, self.weights, u_ref)
        g = reduced_gradient(adj, u, self.weights, adapted=u_ref is not None, u_ref=u_ref)
        return J, g, traj, adj

    def zero_control(self) -> np.ndarray:
        return self.grid.zeros_surface(self.grid.Nt + 1)


@dataclass
class OptimizeResult:
    u: np.ndarray
    cost: float
    residual: float
    stationary: bool
    history: list
    traj: Optional[StateTrajectory] = None
    adj: Optional[AdjointTrajectory] = None


def optimize(problem: ControlProblem, alpha: float, u0, u_ref=None, tol_stat: float = 1e-6,
             max_iters: int = 500, tau0: float = 1.0, sigma: float = 1e-4,
             tau_min: float = 1e-8, tau_max: float = 1e4, bb: bool = True) -> OptimizeResult:
    """Projected gradient with Armijo backtracking.

    A trial ``u+ = P(u - tau g)`` is accepted when
    ``J(u+) <= J(u) - sigma/tau ||u+ - u||^2``, so the cost history is
    monotone.  The first trial step of each iteration is the
    Barzilai-Borwein step (``bb=True``) or twice the last accepted one;
    rejections halve it.  ``u_ref`` switches to the adapted cost.
    """
    if not alpha > 0:
        raise ValueError("optimize needs alpha > 0")
    grid, A = problem.grid, problem.admissible
    u = np.asarray(u0, float).copy()
    if not A.contains(u, grid):
        raise AssumptionError("(A3): initial control not admissible")
    J, g, traj, adj = problem.value_and_gradient(u, alpha, u_ref)
    tau = tau0
    history = []
    stationary = False
    for it in range(max_iters + 1):
        res = stationarity_residual(u, g, A, grid)
        history.append({"iter": it, "cost": J, "residual": res, "tau": tau})
        if res <= tol_stat:
            stationary = True
            break
        if it == max_iters:
            break
        while True:
            u_new = project(u - tau * g, A, grid)
            step = norm_l2_spacetime(u_new - u, grid)
            try:
                J_new = problem.value(u_new, alpha, u_ref)
            except SolveError as exc:
                log.info("trial control rejected, state solve failed: %s", exc)
                J_new = np.inf
            if J_new <= J - sigma / tau * step**2:
                break
            tau *= 0.5
            if tau < tau_min:
                log.warning("line search failed at iteration %d (residual %.3e)", it, res)
                return OptimizeResult(u, J, res, False, history, traj, adj)
        g_old = g
        s_k = u_new - u
        u = u_new
        J, g, traj, adj = problem.value_and_gradient(u, alpha, u_ref)
        curv = inner_l2_spacetime(s_k, g - g_old, grid)
        if bb and curv > 0:
            tau = inner_l2_spacetime(s_k, s_k, grid) / curv
        else:
            tau = 2.0 * tau
        tau = min(max(tau, tau_min), tau_max)
    return OptimizeResult(u, J, res, stationary, history, traj, adj)


@dataclass
class GradientCheckRow:
    direction: int
    adjoint: float
    fd: float
    rel_error: float


def gradient_check(problem: ControlProblem, alpha: float, u, n_directions: int = 10,
                   seed: int = 0, eps_rel: float = 1e-5) -> list:
    """Compare ``<g, v>`` with central differences along seeded random directions.

    Directions are standard normal, scaled to unit max-norm; the step is
    ``eps_rel * max(1, max|u|)``.
    """
    u = np.asarray(u, float)
    _, g, _, _ = problem.value_and_gradient(u, alpha)
    rng = np.random.default_rng(seed)
    eps = eps_rel * max(1.0, float(np.max(np.abs(u))))
    rows = []
    for i in range(n_directions):
        v = rng.standard_normal(u.shape)
        v /= np.max(np.abs(v))
        ga = inner_l2_spacetime(g, v, problem.grid)
        fd = (problem.value(u + eps * v, alpha) - problem.value(u - eps * v, alpha)) / (2 * eps)
        rows.append(GradientCheckRow(i, ga, fd, abs(ga - fd) / max(abs(fd), 1e-300)))
    return rows
