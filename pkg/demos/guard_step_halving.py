"""One large time step with a steep potential: the positivity guard at work.

With g(rho) = 1 - rho^2 and a strong boundary push, a single backward-Euler
step of size 1 would drive the chemical potential negative.  The solver
notices, halves the step and retries.  The printout shows how many halvings
were needed and that the result stays nonnegative.

    python3 demos/guard_step_halving.py
"""
import numpy as np

from chquench import PotentialSet, SolveError, SolverOptions, StripGrid, solve_state

pot = PotentialSet.from_polynomials([1.0, 0.0, -1.0], [0.0, -1.0], [0.0, -1.0])
grid = StripGrid(8, 2, 2.0, 0.25, 1, 1.0)
u = np.full((grid.Nt + 1,) + grid.surface_shape, 5.0)
mu0 = np.ones(grid.bulk_shape)
rho0 = np.full(grid.bulk_shape, -0.9)

for budget in (0, 1, 2, 8):
    try:
        tr = solve_state(u, 0.3, mu0, rho0, grid, pot, SolverOptions(dt_halving_budget=budget))
    except SolveError as exc:
        print(f"budget {budget}: failed ({exc})")
        continue
    print(f"budget {budget}: guard events {tr.guard_events}, halvings {tr.halvings}, "
          f"substeps {tr.stats['substeps'][0]}, min mu {tr.mu.min():.3e}, "
          f"1 - max |rho| = {1 - np.abs(tr.rho).max():.3e}")
