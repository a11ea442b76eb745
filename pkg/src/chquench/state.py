"""Forward solver for the state system.

One time step is split into an order-parameter step followed by a chemical
potential step:

* ``rho``: backward Euler with the singular part implicit.  For ``alpha > 0``
  the reaction ``phi(alpha) h'(rho)`` is handled by a damped Newton method
  that keeps every iterate in ``[-1+EPS_SAFE, 1-EPS_SAFE]``; for
  ``alpha = 0`` the inclusion ``xi in dI(rho)`` is solved by a primal-dual
  active-set iteration.  ``pi``, ``pi_Gamma`` and the coupling
  ``mu g'(rho)`` are explicit.
* ``mu``: one linear M-matrix solve using ``(rho_old, rho_new)``.

A step that fails (Newton divergence, active-set cycling, or a failed
positivity guard of the ``mu`` step) is retried on ``2, 4, ...`` uniform
substeps, with the boundary control interpolated linearly in time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import StripGrid, gradient_energy, surface_view
from .physics import (EPS_SAFE, AssumptionError, PotentialSet, free_energy,
                      h_double_prime, h_prime)

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """A single (sub)step could not be completed."""

    def __init__(self, kind: str, message: str, history=None):
        self.kind = kind
        self.history = list(history or [])
        super().__init__(f"{kind}: {message}")


class SolveError(RuntimeError):
    """A time step failed even after exhausting the dt-halving budget."""


@dataclass(frozen=True)
class SolverOptions:
    tol_newton: float = 1e-11
    max_newton: int = 50
    max_pdas: int = 100
    pdas_c: float = 1.0
    dt_halving_budget: int = 8


@dataclass
class StepLog:
    """Counters filled in by the step functions."""

    newton_iters: int = 0
    damping_events: int = 0
    pdas_iters: int = 0
    guard_events: int = 0
    failures: list = field(default_factory=list)


@dataclass
class SubStep:
    """One accepted (sub)step ``(rho_a, mu_a) -> (rho_b, mu_b)``.

    ``theta`` is the position of the substep's end inside its macro interval
    (1 for the last substep); the control used is
    ``(1 - theta) u[k] + theta u[k+1]``.
    """

    dt: float
    theta: float
    rho_a: np.ndarray
    mu_a: np.ndarray
    rho_b: np.ndarray
    mu_b: np.ndarray
    u: np.ndarray
    active: Optional[tuple] = None


@dataclass
class StateTrajectory:
    grid: StripGrid
    alpha: float
    mu: np.ndarray
    rho: np.ndarray
    xi: np.ndarray
    u: np.ndarray
    steps: list
    stats: dict

    @property
    def rhoG(self) -> np.ndarray:
        return surface_view(self.rho)

    @property
    def xiG(self) -> np.ndarray:
        return surface_view(self.xi)

    @property
    def guard_events(self) -> int:
        return int(sum(self.stats["guard_events"]))

    @property
    def halvings(self) -> int:
        return int(sum(self.stats["halvings"]))


# ---------------------------------------------------------------------------
# building blocks


def _rho_rhs(rho_prev, mu_prev, uG, grid, pot, dt):
    """Explicit part of the order-parameter step (bulk array)."""
    b = rho_prev / dt + mu_prev * pot.dg(rho_prev) - pot.pi(rho_prev)
    surface_view(b)[...] = surface_view(rho_prev) / dt + uG - pot.piG(surface_view(rho_prev))
    return b


def _rho_matrix(grid: StripGrid, dt: float) -> sp.csr_matrix:
    return (sp.identity(grid.n_bulk, format="csr") / dt + grid.rho_operator).tocsr()


def _fraction_to_boundary(r, d):
    lo, hi = -1.0 + EPS_SAFE, 1.0 - EPS_SAFE
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(d > 0, (hi - r) / d, np.where(d < 0, (lo - r) / d, np.inf))
    return float(np.min(s)) if s.size else np.inf


def step_rho_regularized(rho_prev, mu_prev, uG_next, alpha, grid: StripGrid,
                         pot: PotentialSet, opts: SolverOptions = SolverOptions(),
                         dt: float | None = None, log_: StepLog | None = None):
    """Order-parameter step for ``alpha > 0`` by damped Newton.

    The damping factor is 1 when the full Newton step stays in
    ``[-1+EPS_SAFE, 1-EPS_SAFE]`` and 0.99 times the largest admissible
    fraction otherwise (counted as a damping event).
    """
    if not alpha > 0:
        raise ValueError("step_rho_regularized needs alpha > 0")
    dt = grid.dt if dt is None else dt
    phi_a = pot.phi(alpha)
    rho_prev = np.asarray(rho_prev, dtype=float)
    b = _rho_rhs(rho_prev, mu_prev, uG_next, grid, pot, dt).ravel()
    K = grid.rho_operator
    r = np.clip(rho_prev.ravel(), -1.0 + EPS_SAFE, 1.0 - EPS_SAFE)
    history = []
    tiny = 8 * np.finfo(float).eps
    for it in range(opts.max_newton + 1):
        F = K @ r + r / dt + phi_a * h_prime(r) - b
        res = float(np.max(np.abs(F)))
        history.append(res)
        if res <= opts.tol_newton:
            break
        if it == opts.max_newton or not np.isfinite(res):
            raise StepFailure("newton", f"no convergence after {it} iterations "
                              f"(residual {res:.3e})", history)
        J = grid.rho_shifted(1.0 / dt + phi_a * h_double_prime(r))
        d = splu(J).solve(-F)
        smax = _fraction_to_boundary(r, d)
        if smax >= 1.0:
            s = 1.0
        else:
            s = 0.99 * smax
            if log_ is not None:
                log_.damping_events += 1
        r = np.clip(r + s * d, -1.0 + EPS_SAFE, 1.0 - EPS_SAFE)
        if log_ is not None:
            log_.newton_iters += 1
        # converged to machine precision: the update no longer moves r
        if s == 1.0 and np.max(np.abs(d)) <= tiny and res <= 1e3 * opts.tol_newton:
            break
    return r.reshape(grid.bulk_shape)


def step_rho_obstacle(rho_prev, mu_prev, uG_next, grid: StripGrid, pot: PotentialSet,
                      opts: SolverOptions = SolverOptions(), dt: float | None = None,
                      active: tuple | None = None, log_: StepLog | None = None):
    """Order-parameter step for the double obstacle by primal-dual active sets.

    Solves ``A rho + xi = b``, ``xi in dI_[-1,1](rho)`` nodewise, where
    ``A = I/dt + K``.  The active sets are updated from
    ``xi / diag(A) + c (rho -+ 1)``.  Returns ``(rho, xi, (upper_set, lower_set))``;
    ``xi`` holds the bulk multiplier on interior rows and the surface
    multiplier on the boundary rows.
    """
    dt = grid.dt if dt is None else dt
    rho_prev = np.asarray(rho_prev, dtype=float)
    if np.any(np.abs(rho_prev) > 1):
        raise ValueError("step_rho_obstacle needs |rho_prev| <= 1")
    b = _rho_rhs(rho_prev, mu_prev, uG_next, grid, pot, dt).ravel()
    A = _rho_matrix(grid, dt)
    dA = A.diagonal()
    c = opts.pdas_c
    if active is None:
        up, lo = rho_prev.ravel() >= 1.0, rho_prev.ravel() <= -1.0
    else:
        up, lo = active[0].ravel().copy(), active[1].ravel().copy()
    seen = []
    for it in range(opts.max_pdas):
        act = up | lo
        free = ~act
        r = np.zeros(grid.n_bulk)
        r[up], r[lo] = 1.0, -1.0
        if free.any():
            Aff = A[free][:, free].tocsc()
            r[free] = splu(Aff).solve(b[free] - A[free][:, act] @ r[act])
        xi = np.zeros(grid.n_bulk)
        xi[act] = (b - A @ r)[act]
        # c acts on the diagonally scaled system: same fixed point, and
        # independent of the dt and mesh scaling of A
        new_up = xi / dA + c * (r - 1.0) > 0
        new_lo = xi / dA + c * (r + 1.0) < 0
        if log_ is not None:
            log_.pdas_iters += 1
        if np.array_equal(new_up, up) and np.array_equal(new_lo, lo):
            return (r.reshape(grid.bulk_shape), xi.reshape(grid.bulk_shape),
                    (up.reshape(grid.bulk_shape), lo.reshape(grid.bulk_shape)))
        seen.append((up.copy(), lo.copy()))
        if any(np.array_equal(new_up, a) and np.array_equal(new_lo, l) for a, l in seen):
            raise StepFailure("pdas", f"active sets cycle after {it + 1} iterations",
                              [(int(a.sum()), int(l.sum())) for a, l in seen])
        up, lo = new_up, new_lo
    raise StepFailure("pdas", f"no stationary active sets after {opts.max_pdas} iterations",
                      [(int(a.sum()), int(l.sum())) for a, l in seen])


def mu_reaction(rho_prev, rho_next, pot: PotentialSet, dt: float):
    """Diagonal of the chemical-potential step and the mass factor ``1 + 2 g``."""
    a = 1.0 + 2.0 * pot.g(rho_next)
    return (a + pot.dg(rho_next) * (rho_next - rho_prev)) / dt, a


def _m_matrix_lu(diag, grid: StripGrid):
    M = grid.mu_shifted(diag.ravel())
    # natural order, diagonal pivots: LU of an M-matrix keeps the sign
    # pattern, so a nonnegative right-hand side gives a nonnegative solution
    return splu(M, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                options={"SymmetricMode": True})


def step_mu(mu_prev, rho_prev, rho_next, grid: StripGrid, pot: PotentialSet,
            dt: float | None = None, log_: StepLog | None = None):
    """Chemical-potential step.

    Solves ``[(1+2g(rho_new))/dt + g'(rho_new)(rho_new - rho_old)/dt - Lap] mu_new
    = (1+2g(rho_new)) mu_old / dt`` with Neumann closure.  Raises
    :class:`StepFailure` (kind ``"guard"``) if the reaction coefficient is
    not positive at every node.
    """
    dt = grid.dt if dt is None else dt
    diag, a = mu_reaction(rho_prev, rho_next, pot, dt)
    if not np.all(diag > 0):
        if log_ is not None:
            log_.guard_events += 1
        raise StepFailure("guard", f"mu reaction coefficient min {diag.min():.3e} <= 0")
    lu = _m_matrix_lu(diag, grid)
    mu = lu.solve((a * mu_prev / dt).ravel())
    if not np.all(np.isfinite(mu)):
        raise SolveError("singular chemical-potential system")
    return mu.reshape(grid.bulk_shape)


# ---------------------------------------------------------------------------
# full trajectory


def validate_initial_data(mu0, rho0, alpha, grid: StripGrid):
    mu0 = np.asarray(mu0, dtype=float)
    rho0 = np.asarray(rho0, dtype=float)
    for name, f in (("mu0", mu0), ("rho0", rho0)):
        if f.shape != grid.bulk_shape:
            raise ValueError(f"{name} has shape {f.shape}, expected {grid.bulk_shape}")
        if not np.all(np.isfinite(f)):
            raise AssumptionError(f"(A1): {name} not finite")
    if np.any(mu0 < 0):
        raise AssumptionError(f"(A1): mu0 >= 0 violated (min {mu0.min():g})")
    if alpha > 0:
        if np.any(np.abs(rho0) > 1.0 - EPS_SAFE):
            raise AssumptionError("(A1): -1 < min rho0 and max rho0 < 1 required "
                                  f"(max |rho0| = {np.abs(rho0).max():g})")
    elif np.any(np.abs(rho0) > 1):
        raise AssumptionError(f"(A1): |rho0| <= 1 violated (max {np.abs(rho0).max():g})")
    return mu0, rho0


def solve_state(u, alpha: float, mu0, rho0, grid: StripGrid, pot: PotentialSet,
                opts: SolverOptions = SolverOptions()) -> StateTrajectory:
    """Integrate the state system for the boundary control ``u`` of shape ``(Nt+1, 2, Nx)``.

    ``alpha > 0`` selects the logarithmic regularization, ``alpha == 0`` the
    double obstacle.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.Nt + 1,) + grid.surface_shape:
        raise ValueError(f"control has shape {u.shape}, expected "
                         f"{(grid.Nt + 1,) + grid.surface_shape}")
    mu0, rho0 = validate_initial_data(mu0, rho0, alpha, grid)
    Nt = grid.Nt
    mu = grid.zeros_bulk(Nt + 1)
    rho = grid.zeros_bulk(Nt + 1)
    xi = grid.zeros_bulk(Nt + 1)
    mu[0], rho[0] = mu0, rho0
    if alpha > 0:
        xi[0] = pot.phi(alpha) * h_prime(rho0)
    stats = {k: [] for k in ("newton_iters", "damping_events", "pdas_iters",
                             "guard_events", "halvings", "substeps")}
    steps = []
    active = None if alpha > 0 else (rho0 >= 1.0, rho0 <= -1.0)
    for k in range(Nt):
        slog = StepLog()
        for level in range(opts.dt_halving_budget + 1):
            n = 2**level
            dts = grid.dt / n
            subs = []
            r, m, act = rho[k], mu[k], active
            try:
                for s in range(n):
                    theta = (s + 1) / n
                    uu = (1.0 - theta) * u[k] + theta * u[k + 1]
                    if alpha > 0:
                        r_new = step_rho_regularized(r, m, uu, alpha, grid, pot, opts, dts, slog)
                        act_new = None
                    else:
                        r_new, xi_new, act_new = step_rho_obstacle(r, m, uu, grid, pot, opts,
                                                                   dts, act, slog)
                    m_new = step_mu(m, r, r_new, grid, pot, dts, slog)
                    subs.append(SubStep(dts, theta, r, m, r_new, m_new, uu, act_new))
                    r, m, act = r_new, m_new, act_new
            except StepFailure as exc:
                slog.failures.append(str(exc))
                log.debug("step %d failed on %d substeps: %s", k, n, exc)
                if level == opts.dt_halving_budget:
                    raise SolveError(f"step {k} failed after {level} halvings: {exc}") from exc
                continue
            break
        rho[k + 1], mu[k + 1] = r, m
        if alpha > 0:
            xi[k + 1] = pot.phi(alpha) * h_prime(r)
        else:
            xi[k + 1] = xi_new
        active = act
        steps.append(subs)
        stats["newton_iters"].append(slog.newton_iters)
        stats["damping_events"].append(slog.damping_events)
        stats["pdas_iters"].append(slog.pdas_iters)
        stats["guard_events"].append(slog.guard_events)
        stats["halvings"].append(level)
        stats["substeps"].append(n)
    return StateTrajectory(grid, float(alpha), mu, rho, xi, u.copy(), steps, stats)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class EnergyLedger:
    """Time series of the chemical-potential energy balance.

    ``E_mu = int (1/2 + g(rho)) mu^2``, ``D_mu`` accumulates
    ``dt * int |grad mu|^2`` and ``drift = E_mu + D_mu - E_mu[0]``, which is
    O(dt).  ``N_mu`` accumulates the backward-Euler dissipation
    ``1/2 int (1+2g) (mu_new - mu_old)^2``; ``drift_scheme = drift + N_mu``
    vanishes up to round-off whenever ``rho`` does not change.
    """

    E_mu: np.ndarray
    D_mu: np.ndarray
    N_mu: np.ndarray
    drift: np.ndarray
    drift_scheme: np.ndarray
    F_tot: np.ndarray


def energy_ledger(traj: StateTrajectory, pot: PotentialSet) -> EnergyLedger:
    grid = traj.grid
    W = grid.bulk_weights
    Nt = grid.Nt
    E = np.array([np.sum(W * (0.5 + pot.g(traj.rho[k])) * traj.mu[k] ** 2)
                  for k in range(Nt + 1)])
    D = np.zeros(Nt + 1)
    N = np.zeros(Nt + 1)
    for k, subs in enumerate(traj.steps):
        d = sum(s.dt * gradient_energy(s.mu_b, grid) for s in subs)
        n = sum(0.5 * np.sum(W * (1 + 2 * pot.g(s.rho_b)) * (s.mu_b - s.mu_a) ** 2)
                for s in subs)
        D[k + 1] = D[k] + d
        N[k + 1] = N[k] + n
    F = np.array([free_energy(traj.rho[k], None, traj.mu[k], traj.u[k], pot, grid)
                  for k in range(Nt + 1)])
    return EnergyLedger(E, D, N, E + D - E[0], E + D + N - E[0], F)


def multiplier_signs_ok(traj: StateTrajectory, tol: float = 1e-10) -> bool:
    """Nodewise ``xi * (rho - z) >= -tol`` for ``z`` in ``{-1, 0, 1}``."""
    return all(np.all(traj.xi * (traj.rho - z) >= -tol) for z in (-1.0, 0.0, 1.0))
