"""Command line interface.

``chquench <subcommand> --config PATH [--alpha A] [--run-dir DIR]``

Exit status: 0 success, 2 configuration or assumption error, 3 solver
failure, 4 gradient check above tolerance.  Failures print one line
``error code=<n> kind=<kind> message=<json string>`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .adjoint import solve_adjoint
from .config import ConfigError, RunSetup, build, parse_config
from .control import gradient_check, optimize, stationarity_residual, reduced_gradient
from .cost import cost_terms_by_level
from .fieldio import write_field
from .quench import QuenchMember, inversions, run_quench, xi_limit_check
from .state import SolveError, StepFailure, energy_ledger

log = logging.getLogger("chquench")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4


class CommandError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        self.code, self.kind = code, kind
        super().__init__(message)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_cell(v) for v in r])
    return path


def _emit(run_dir: Path, setup: RunSetup, arrays: dict):
    """Write ``name -> (Nt+1, ...)`` arrays as one snapshot file per time level."""
    if not setup.config["io.emit_fields"]:
        return
    fdir = run_dir / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    for name, arr in arrays.items():
        for k, snap in enumerate(arr):
            write_field(fdir / f"{name}_{k:04d}.bin", snap, name, k)


def _state_rows(traj, u, setup):
    pb = setup.problem
    terms = cost_terms_by_level(traj, u, pb.weights)
    led = energy_ledger(traj, pb.pot)
    st = traj.stats
    rows = []
    for k in range(pb.grid.Nt + 1):
        s = (lambda key: st[key][k - 1] if k > 0 else 0)
        rows.append([k, pb.grid.t[k], *terms[k], led.E_mu[k], led.D_mu[k], led.N_mu[k],
                     led.drift[k], led.drift_scheme[k], led.F_tot[k], traj.mu[k].min(),
                     np.abs(traj.rho[k]).max(),
                     s("newton_iters"), s("damping_events"), s("pdas_iters"),
                     s("guard_events"), s("halvings")])
    header = ["k", "t", "J1", "J2", "J3", "J4", "J5", "J6", "E_mu", "D_mu", "N_mu", "drift",
              "drift_scheme", "F_total", "min_mu", "max_abs_rho", "newton_iters", "damping_events",
              "pdas_iters", "guard_events", "halvings"]
    return header, rows


def _alpha(setup, alpha):
    return setup.schedule.alpha0 if alpha is None else alpha


def cmd_solve_state(setup: RunSetup, run_dir: Path, alpha=None) -> int:
    a = _alpha(setup, alpha)
    traj = setup.problem.state(setup.u0, a)
    header, rows = _state_rows(traj, setup.u0, setup)
    write_csv(run_dir / "diagnostics.csv", header, rows)
    _emit(run_dir, setup, {"mu": traj.mu, "rho": traj.rho, "xi": traj.xi, "u": traj.u})
    print(f"solve-state alpha={a:g} min_mu={traj.mu.min():.6e} "
          f"max_abs_rho={np.abs(traj.rho).max():.15f} guard_events={traj.guard_events}")
    return EXIT_OK


def cmd_solve_adjoint(setup: RunSetup, run_dir: Path, alpha=None) -> int:
    a = _alpha(setup, alpha)
    if not a > 0:
        raise CommandError(EXIT_CONFIG, "config", "solve-adjoint needs alpha > 0")
    pb = setup.problem
    traj = pb.state(setup.u0, a)
    adj = solve_adjoint(traj, pb.weights, pb.pot)
    g = reduced_gradient(adj, setup.u0, pb.weights)
    header, rows = _state_rows(traj, setup.u0, setup)
    header += ["p_sup", "q_sup", "lam_sup", "sensitivity_sup"]
    for k, r in enumerate(rows):
        r += [np.abs(adj.p[k]).max(), np.abs(adj.q[k]).max(), np.abs(adj.lam[k]).max(),
              np.abs(adj.sensitivity[k]).max()]
    write_csv(run_dir / "diagnostics.csv", header, rows)
    _emit(run_dir, setup, {"mu": traj.mu, "rho": traj.rho, "p": adj.p, "q": adj.q,
                           "lam": adj.lam, "gradient": g})
    res = stationarity_residual(setup.u0, g, pb.admissible, pb.grid)
    print(f"solve-adjoint alpha={a:g} stationarity_residual={res:.6e}")
    return EXIT_OK


def cmd_grad_check(setup: RunSetup, run_dir: Path, alpha=None) -> int:
    a = _alpha(setup, alpha)
    if not a > 0:
        raise CommandError(EXIT_CONFIG, "config", "grad-check needs alpha > 0")
    c = setup.config
    rows = gradient_check(setup.problem, a, setup.u0, c["gradcheck.directions"], c["io.seed"])
    write_csv(run_dir / "grad_check.csv", ["direction", "adjoint", "fd", "rel_error"],
              [[r.direction, r.adjoint, r.fd, r.rel_error] for r in rows])
    worst = max(r.rel_error for r in rows)
    ok = worst <= c["gradcheck.tol"]
    print(f"grad-check alpha={a:g} max_rel_error={worst:.3e} tol={c['gradcheck.tol']:g} "
          f"{'pass' if ok else 'FAIL'}")
    if not ok:
        raise CommandError(EXIT_CHECK, "grad-check",
                           f"max relative error {worst:.3e} exceeds {c['gradcheck.tol']:g}")
    return EXIT_OK


def cmd_optimize(setup: RunSetup, run_dir: Path, alpha=None) -> int:
    a = _alpha(setup, alpha)
    if not a > 0:
        raise CommandError(EXIT_CONFIG, "config", "optimize needs alpha > 0")
    res = optimize(setup.problem, a, setup.u0, tol_stat=setup.tol_stat,
                   max_iters=setup.max_iters)
    write_csv(run_dir / "diagnostics.csv", ["iter", "cost", "residual", "tau"],
              [[h["iter"], h["cost"], h["residual"], h["tau"]] for h in res.history])
    _emit(run_dir, setup, {"u": res.u, "rho": res.traj.rho, "mu": res.traj.mu})
    print(f"optimize alpha={a:g} cost={res.cost:.12e} residual={res.residual:.3e} "
          f"iterations={len(res.history) - 1} stationary={res.stationary}")
    return EXIT_OK


def cmd_quench(setup: RunSetup, run_dir: Path, alpha=None) -> int:
    if alpha is not None:
        log.warning("--alpha is ignored by quench; the schedule comes from the config")
    rep = run_quench(setup.problem, setup.schedule, tol_stat=setup.tol_stat,
                     max_iters=setup.max_iters)
    cols = list(QuenchMember.SCALARS)
    write_csv(run_dir / "summary.csv", cols,
              [[m.scalars()[k] for k in cols] for m in rep.members])
    hist = []
    if rep.incumbent is not None:
        hist += [["incumbent", h["iter"], h["cost"], h["residual"], h["tau"]]
                 for h in rep.incumbent.history]
    for m in rep.members:
        hist += [[f"member{m.n}", h["iter"], h["cost"], h["residual"], h["tau"]]
                 for h in m.history]
    write_csv(run_dir / "diagnostics.csv", ["stage", "iter", "cost", "residual", "tau"], hist)
    xi = xi_limit_check(rep)
    write_csv(run_dir / "limit.csv", ["quantity", "value"],
              [["rho_gap_to_obstacle", rep.limit_gap],
               ["final_control_gap", rep.last.control_gap],
               ["state_gap_inversions", inversions(rep.state_gaps)],
               ["control_gap_inversions", inversions(rep.control_gaps)],
               ["xi_sign_violation", xi.violation],
               *[[f"xi_weak_gap_{i}", v] for i, v in enumerate(xi.weak_gaps)]])
    _emit(run_dir, setup, {"u_final": rep.last.u, "rho_final": rep.last.traj.rho,
                           "rho_obstacle": rep.traj0.rho, "xi_obstacle": rep.traj0.xi})
    print(f"quench members={len(rep.members)} final_control_gap={rep.last.control_gap:.3e} "
          f"rho_gap_to_obstacle={rep.limit_gap:.3e} nonstationary={rep.nonstationary}")
    return EXIT_OK


def cmd_validate(setup: RunSetup, run_dir: Path, alpha=None) -> int:
    print(f"config valid; resolved copy written to {run_dir / 'config.resolved'}")
    return EXIT_OK


COMMANDS = {
    "solve-state": cmd_solve_state,
    "solve-adjoint": cmd_solve_adjoint,
    "grad-check": cmd_grad_check,
    "optimize": cmd_optimize,
    "quench": cmd_quench,
    "validate": cmd_validate,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chquench", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--alpha", type=float, default=None,
                   help="regularization parameter (default: quench.alpha0)")
    p.add_argument("--run-dir", type=Path, default=None,
                   help="output directory (default: io.run_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(code: int, kind: str, message: str) -> int:
    print(f"error code={code} kind={kind} message={json.dumps(message)}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.run_dir is not None:
            cfg = cfg.with_overrides(io__run_dir=str(args.run_dir))
        if args.alpha is not None and args.alpha < 0:
            raise ConfigError("--alpha must be >= 0")
        setup = build(cfg, args.alpha)
        run_dir = Path(cfg["io.run_dir"])
        if not run_dir.is_absolute() and args.run_dir is None:
            run_dir = Path(cfg.base_dir) / run_dir
        cfg.write_resolved(run_dir)
        return COMMANDS[args.command](setup, run_dir, args.alpha)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (SolveError, StepFailure) as exc:
        return _fail(EXIT_SOLVER, "solver", str(exc))
    except CommandError as exc:
        return _fail(exc.code, exc.kind, str(exc))


if __name__ == "__main__":
    sys.exit(main())
