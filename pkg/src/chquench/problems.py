"""Reference problems on the 16 x 8 desk-scale grid, built from a seed."""
from __future__ import annotations

import numpy as np

from .control import AdmissibleSet, ControlProblem
from .cost import CostWeights
from .grid import StripGrid, surface_view
from .physics import default_potentials
from .state import SolverOptions

REGRESSION_SEED = 20240611


def smooth_random_field(grid: StripGrid, rng: np.random.Generator, modes: int = 2,
                        amplitude: float = 1.0) -> np.ndarray:
    """Random combination of low Fourier modes, scaled to max-norm ``amplitude``."""
    X, Y = grid.mesh()
    f = np.zeros_like(X)
    for m in range(1, modes + 1):
        for l in range(modes):
            a, b = rng.standard_normal(2)
            f += (a * np.cos(2 * np.pi * m * X / grid.Lx)
                  + b * np.sin(2 * np.pi * m * X / grid.Lx)) * np.cos(np.pi * l * Y / grid.Ly)
    return amplitude * f / np.max(np.abs(f))


def default_initial_data(grid: StripGrid):
    X, Y = grid.mesh()
    mu0 = 1.0 + 0.5 * np.cos(2 * np.pi * X / grid.Lx)
    rho0 = 0.2 * np.sin(2 * np.pi * X / grid.Lx) * np.cos(np.pi * Y / grid.Ly)
    return mu0, rho0


def tracking_problem(seed: int = REGRESSION_SEED, Nx: int = 16, Ny: int = 8, Nt: int = 20,
                     opts: SolverOptions | None = None) -> ControlProblem:
    """Order-parameter tracking on the strip ``[0,2) x [0,1]``, ``T = 1``.

    The target is ``0.5 cos(2 pi x / Lx)`` plus a seeded smooth perturbation of
    max-norm 0.15, held constant in time and also used at the terminal time
    (bulk and boundary, so the terminal pair is trace compatible).
    """
    grid = StripGrid(Nx, Ny, 2.0, 1.0, Nt, 1.0)
    rng = np.random.default_rng(seed)
    X, _ = grid.mesh()
    tgt = 0.5 * np.cos(2 * np.pi * X / grid.Lx) + smooth_random_field(grid, rng, amplitude=0.15)
    w = CostWeights(0.0, 1.0, 1.0, 1.0, 1.0, 1e-2, rho_Q=tgt, rho_Sigma=surface_view(tgt),
                    rho_Omega=tgt, rho_Gamma=surface_view(tgt))
    mu0, rho0 = default_initial_data(grid)
    return ControlProblem(grid, default_potentials(), w, AdmissibleSet(-8.0, 8.0), mu0, rho0,
                          opts or SolverOptions())


def pure_control_problem(Nx: int = 16, Ny: int = 8, Nt: int = 20) -> ControlProblem:
    """Only the control cost is weighted; the minimizer over ``[-1, 1]`` is ``u = 0``."""
    grid = StripGrid(Nx, Ny, 2.0, 1.0, Nt, 1.0)
    w = CostWeights(beta6=1.0)
    mu0, rho0 = default_initial_data(grid)
    return ControlProblem(grid, default_potentials(), w, AdmissibleSet(-1.0, 1.0), mu0, rho0)
