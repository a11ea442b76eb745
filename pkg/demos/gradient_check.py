"""Adjoint gradient against central differences on the regression problem.

    python3 demos/gradient_check.py
"""
import numpy as np

from chquench import gradient_check, tracking_problem

problem = tracking_problem()
u = 2.0 * np.random.default_rng(11).standard_normal((problem.grid.Nt + 1, 2, problem.grid.Nx))
for alpha in (0.1, 1e-3):
    print(f"alpha = {alpha:g}")
    for row in gradient_check(problem, alpha, u):
        print(f"  direction {row.direction}: adjoint {row.adjoint:+.10e} "
              f"fd {row.fd:+.10e} rel {row.rel_error:.1e}")
