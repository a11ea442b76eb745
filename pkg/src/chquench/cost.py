"""Tracking cost functional and its partial derivatives with respect to the state."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import StripGrid, inner_l2_bulk, inner_l2_spacetime, inner_l2_surface, surface_view
from .physics import AssumptionError


@dataclass
class CostWeights:
    """Weights ``beta1..beta6`` and target functions.

    Space-time targets (``mu_Q``, ``rho_Q``, ``rho_Sigma``) may be given per
    time level (leading ``Nt+1`` axis) or as a single snapshot that is held
    constant in time.  Scalars broadcast.
    """

    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    beta4: float = 0.0
    beta5: float = 0.0
    beta6: float = 0.0
    mu_Q: object = 0.0
    rho_Q: object = 0.0
    rho_Sigma: object = 0.0
    rho_Omega: object = 0.0
    rho_Gamma: object = 0.0

    def __post_init__(self):
        b = self.betas
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise AssumptionError("(A5): weights beta1..beta6 must be nonnegative")
        if not np.any(b > 0):
            raise AssumptionError("(A5): beta1..beta6 must not all be equal to zero")

    @property
    def betas(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2, self.beta3, self.beta4, self.beta5, self.beta6],
                        dtype=float)

    def targets(self, grid: StripGrid):
        """Targets broadcast to full grid shapes."""
        nt = grid.Nt + 1
        return (np.broadcast_to(np.asarray(self.mu_Q, float), (nt,) + grid.bulk_shape),
                np.broadcast_to(np.asarray(self.rho_Q, float), (nt,) + grid.bulk_shape),
                np.broadcast_to(np.asarray(self.rho_Sigma, float), (nt,) + grid.surface_shape),
                np.broadcast_to(np.asarray(self.rho_Omega, float), grid.bulk_shape),
                np.broadcast_to(np.asarray(self.rho_Gamma, float), grid.surface_shape))

    def compatible_terminal_targets(self, grid: StripGrid, atol: float = 1e-12) -> bool:
        """Sufficient condition for (A6): ``beta4 == beta5`` and the terminal
        targets form a trace-compatible pair (or both weights vanish)."""
        if self.beta4 == 0 and self.beta5 == 0:
            return True
        *_, rO, rG = self.targets(grid)
        return bool(self.beta4 == self.beta5
                    and np.allclose(surface_view(rO), rG, atol=atol, rtol=0))

    def check_compatibility(self, grid: StripGrid) -> bool:
        ok = self.compatible_terminal_targets(grid)
        if not ok:
            warnings.warn("(A6): terminal targets not checked compatible "
                          "(need beta4 == beta5 and trace-compatible targets)", stacklevel=2)
        return ok


def _check_control_shape(u, grid):
    if np.shape(u) != (grid.Nt + 1,) + grid.surface_shape:
        raise ValueError(f"control has shape {np.shape(u)}, expected "
                         f"{(grid.Nt + 1,) + grid.surface_shape}")


def cost_terms(traj, u, w: CostWeights) -> np.ndarray:
    """The six halves-of-squared-norms of the cost, weighted, as an array."""
    grid = traj.grid
    _check_control_shape(u, grid)
    mQ, rQ, rS, rO, rG = w.targets(grid)
    b = w.betas
    dmu = traj.mu - mQ
    drho = traj.rho - rQ
    drG = traj.rhoG - rS
    dT = traj.rho[-1] - rO
    dTG = traj.rhoG[-1] - rG
    u = np.asarray(u, dtype=float)
    return 0.5 * b * np.array([
        inner_l2_spacetime(dmu, dmu, grid),
        inner_l2_spacetime(drho, drho, grid),
        inner_l2_spacetime(drG, drG, grid),
        inner_l2_bulk(dT, dT, grid),
        inner_l2_surface(dTG, dTG, grid),
        inner_l2_spacetime(u, u, grid),
    ])


def cost(traj, u, w: CostWeights) -> float:
    return float(np.sum(cost_terms(traj, u, w)))


def adapted_cost(traj, u, w: CostWeights, u_ref) -> float:
    """Cost plus ``1/2 ||u - u_ref||^2`` over the space-time boundary."""
    d = np.asarray(u, float) - np.asarray(u_ref, float)
    return cost(traj, u, w) + 0.5 * inner_l2_spacetime(d, d, traj.grid)


def state_gradients(traj, w: CostWeights):
    """Euclidean partial derivatives of the cost with respect to the state arrays.

    Returns ``(d_mu, d_rho, d_rho_terminal)``: running parts per time level
    (already multiplied by the quadrature weights) and the terminal part
    with respect to ``rho[Nt]``.
    """
    grid = traj.grid
    mQ, rQ, rS, rO, rG = w.targets(grid)
    tw = grid.time_weights[:, None, None]
    W = grid.bulk_weights
    d_mu = w.beta1 * tw * W * (traj.mu - mQ)
    d_rho = w.beta2 * tw * W * (traj.rho - rQ)
    surface_view(d_rho)[...] += w.beta3 * tw * grid.dx * (traj.rhoG - rS)
    d_T = w.beta4 * W * (traj.rho[-1] - rO)
    surface_view(d_T)[...] += w.beta5 * grid.dx * (traj.rhoG[-1] - rG)
    return d_mu, d_rho, d_T


def cost_terms_by_level(traj, u, w: CostWeights) -> np.ndarray:
    """Contribution of every time level to each of the six terms, shape ``(Nt+1, 6)``.

    Summing over the first axis gives :func:`cost_terms`.
    """
    grid = traj.grid
    _check_control_shape(u, grid)
    mQ, rQ, rS, rO, rG = w.targets(grid)
    b = w.betas
    tw = grid.time_weights
    W, dx = grid.bulk_weights, grid.dx
    out = np.zeros((grid.Nt + 1, 6))
    out[:, 0] = tw * np.sum(W * (traj.mu - mQ) ** 2, axis=(1, 2))
    out[:, 1] = tw * np.sum(W * (traj.rho - rQ) ** 2, axis=(1, 2))
    out[:, 2] = tw * dx * np.sum((traj.rhoG - rS) ** 2, axis=(1, 2))
    out[-1, 3] = np.sum(W * (traj.rho[-1] - rO) ** 2)
    out[-1, 4] = dx * np.sum((traj.rhoG[-1] - rG) ** 2)
    out[:, 5] = tw * dx * np.sum(np.asarray(u, float) ** 2, axis=(1, 2))
    return 0.5 * b * out
