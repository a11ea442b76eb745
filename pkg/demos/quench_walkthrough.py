"""Deep-quench continuation on the regression tracking problem.

Runs the alpha schedule 0.1, 0.025, ... (seven members), then prints the
per-member table and the comparison with the obstacle (alpha = 0) state.
Takes about twenty seconds.

    python3 demos/quench_walkthrough.py
"""
from chquench import QuenchSchedule, run_quench, tracking_problem, xi_limit_check
from chquench.quench import inversions

problem = tracking_problem()
report = run_quench(problem, QuenchSchedule())

print(f"incumbent: {len(report.incumbent.history) - 1} iterations, "
      f"cost {report.incumbent.cost:.6e}")
print(f"{'n':>2} {'alpha':>10} {'J':>13} {'iters':>5} {'state gap':>10} "
      f"{'control gap':>11} {'conc/phi':>9}")
for m in report.members:
    print(f"{m.n:>2} {m.alpha:>10.3e} {m.J:>13.6e} {m.iterations:>5} {m.state_gap:>10.3e} "
          f"{m.control_gap:>11.3e} {m.concentration / m.phi:>9.4f}")

print(f"inversions: state {inversions(report.state_gaps)}, "
      f"control {inversions(report.control_gaps)}")
print(f"distance of the last member's order parameter to the obstacle state: "
      f"{report.limit_gap:.3e}")
xi = xi_limit_check(report)
print(f"multiplier sign violation {xi.violation:.3e}, "
      f"largest weak gap {xi.weak_gaps.max():.3e}")
