"""Exact discrete adjoint of the forward scheme.

The backward sweep applies, in reverse order, the transpose of the
linearization of every accepted substep: first the chemical-potential step
(an M-matrix solve with ``M^T``), then the order-parameter step,
differentiated at its converged Newton point through the implicit function
theorem.  The reduced gradient assembled from it is therefore the exact
derivative of the discrete cost, up to the inner Newton tolerance.

Stored fields are densities:

* ``p[k]``, ``q[k]``: gradient of the cost still to come after level ``k``
  with respect to ``mu[k]`` and ``rho[k]``, divided by the bulk quadrature
  weights (``p``) and by the lumped bulk+surface mass (``q``).  With this
  scaling ``p[Nt] = 0`` and ``q[Nt]`` equals the terminal tracking residuals.
* ``sensitivity[k]``: derivative of the state-dependent part of the cost
  with respect to ``u[k]`` as an ``L2(Sigma)`` density, i.e. the boundary
  adjoint seen by the control.
* ``lam = phi(alpha) h''(rho) q``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from .cost import CostWeights, state_gradients
from .grid import inner_l2_spacetime, surface_view
from .physics import PotentialSet, h_double_prime
from .state import StateTrajectory, mu_reaction


@dataclass
class AdjointTrajectory:
    alpha: float
    p: np.ndarray
    q: np.ndarray
    lam: np.ndarray
    sensitivity: np.ndarray

    @property
    def qG(self) -> np.ndarray:
        return surface_view(self.q)

    @property
    def lamG(self) -> np.ndarray:
        return surface_view(self.lam)


def _mu_step_transpose(sub, g_mu_b, pot, grid):
    """Pull ``d/d mu_b`` back through one chemical-potential step."""
    dt = sub.dt
    ra, rb, ma, mb = sub.rho_a, sub.rho_b, sub.mu_a, sub.mu_b
    diag, a = mu_reaction(ra, rb, pot, dt)
    M = grid.mu_shifted_T(diag.ravel())
    z = splu(M).solve(g_mu_b.ravel()).reshape(grid.bulk_shape)
    dg, d2g = pot.dg(rb), pot.d2g(rb)
    d_diag_b = (3.0 * dg + d2g * (rb - ra)) / dt
    g_mu_a = z * a / dt
    g_rho_b = z * (2.0 * dg * ma / dt - mb * d_diag_b)
    g_rho_a = z * mb * dg / dt
    return g_mu_a, g_rho_a, g_rho_b


def _rho_step_transpose(sub, g_rho_b, alpha, pot, grid):
    """Pull ``d/d rho_b`` back through one regularized order-parameter step."""
    dt = sub.dt
    ra, ma, rb = sub.rho_a, sub.mu_a, sub.rho_b
    J = grid.rho_shifted_T(1.0 / dt + pot.phi(alpha) * h_double_prime(rb.ravel()))
    y = splu(J).solve(g_rho_b.ravel()).reshape(grid.bulk_shape)
    g_rho_a = y * (1.0 / dt + ma * pot.d2g(ra) - pot.dpi(ra))
    surface_view(g_rho_a)[...] = surface_view(y) * (1.0 / dt - pot.dpiG(surface_view(ra)))
    g_mu_a = y * pot.dg(ra)
    surface_view(g_mu_a)[...] = 0.0
    return g_rho_a, g_mu_a, surface_view(y).copy()


def solve_adjoint(traj: StateTrajectory, w: CostWeights, pot: PotentialSet) -> AdjointTrajectory:
    """Backward sweep for a regularized (``alpha > 0``) trajectory."""
    if not traj.alpha > 0:
        raise ValueError("solve_adjoint needs a regularized trajectory (alpha > 0); "
                         "the obstacle limit is approached through the quench driver")
    grid = traj.grid
    N = grid.Nt
    d_mu, d_rho, d_T = state_gradients(traj, w)
    mass_mu = grid.bulk_weights
    mass_rho = grid.coupled_mass
    p = grid.zeros_bulk(N + 1)
    q = grid.zeros_bulk(N + 1)
    sens = grid.zeros_surface(N + 1)

    g_mu = np.zeros(grid.bulk_shape)
    g_rho = d_T.copy()
    q[N] = g_rho / mass_rho
    g_mu += d_mu[N]
    g_rho = g_rho + d_rho[N]
    for k in reversed(range(N)):
        for sub in reversed(traj.steps[k]):
            g_mu_a, g_rho_a, g_rho_b = _mu_step_transpose(sub, g_mu, pot, grid)
            r_rho_a, r_mu_a, du = _rho_step_transpose(sub, g_rho + g_rho_b, traj.alpha,
                                                      pot, grid)
            sens[k] += (1.0 - sub.theta) * du
            sens[k + 1] += sub.theta * du
            g_mu = g_mu_a + r_mu_a
            g_rho = g_rho_a + r_rho_a
        p[k] = g_mu / mass_mu
        q[k] = g_rho / mass_rho
        g_mu = g_mu + d_mu[k]
        g_rho = g_rho + d_rho[k]

    lam = pot.phi(traj.alpha) * h_double_prime(traj.rho) * q
    sensitivity = sens / (grid.time_weights[:, None, None] * grid.dx)
    return AdjointTrajectory(traj.alpha, p, q, lam, sensitivity)


def complementarity_products(adj: AdjointTrajectory, traj: StateTrajectory, pot: PotentialSet):
    """Slackness pairings and the concentration identity residual.

    Returns ``(s_bulk, s_surf, id_residual)`` with ``s_bulk = int int lam q``,
    ``s_surf`` the boundary analogue and ``id_residual = max |lam (1 - rho^2)
    - 2 phi(alpha) q|``.
    """
    grid = traj.grid
    s_bulk = inner_l2_spacetime(adj.lam, adj.q, grid)
    s_surf = inner_l2_spacetime(adj.lamG, adj.qG, grid)
    resid = adj.lam * (1.0 - traj.rho) * (1.0 + traj.rho) - 2.0 * pot.phi(adj.alpha) * adj.q
    return s_bulk, s_surf, float(np.max(np.abs(resid)))
