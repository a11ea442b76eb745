"""Nonlinearities of the model.

The logarithmic potential ``h``, the scaling ``phi(alpha) = alpha**p``, the
smooth potentials ``g``, ``pi``, ``pi_Gamma`` and the subdifferential of the
indicator of ``[-1, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import xlogy

from .grid import StripGrid, gradient_energy, surface_gradient_energy, surface_view

# h', h'' are only evaluated on [-1 + EPS_SAFE, 1 - EPS_SAFE].
EPS_SAFE = 1e-12


class DomainError(ValueError):
    """Argument of ``h'`` or ``h''`` too close to (or beyond) +-1."""

    def __init__(self, value):
        self.value = value
        super().__init__(f"h'/h'' evaluated at {value!r}, outside "
                         f"[-1+{EPS_SAFE:g}, 1-{EPS_SAFE:g}]")


class AssumptionError(ValueError):
    """Input data violating one of the standing assumptions (A1)-(A6)."""


def _check_domain(y):
    y = np.asarray(y, dtype=float)
    bad = ~(np.abs(y) <= 1.0 - EPS_SAFE)
    if np.any(bad):
        raise DomainError(y[bad].flat[0] if y.ndim else float(y))
    return y


def h(y):
    """``(1-y) ln(1-y) + (1+y) ln(1+y)``, with value ``2 ln 2`` at ``y = +-1``."""
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) > 1):
        raise DomainError(y[np.abs(y) > 1].flat[0] if y.ndim else float(y))
    a, b = 1.0 - y, 1.0 + y
    # xlogy(0, 0) = 0 gives the endpoint value 2 ln 2
    out = xlogy(a, a) + xlogy(b, b)
    return out if out.ndim else float(out)


def h_prime(y):
    """``ln((1+y)/(1-y))``."""
    y = _check_domain(y)
    out = 2.0 * np.arctanh(y)
    return out if out.ndim else float(out)


def h_double_prime(y):
    """``2 / (1 - y**2)``."""
    y = _check_domain(y)
    out = 2.0 / ((1.0 - y) * (1.0 + y))
    return out if out.ndim else float(out)


def phi(alpha: float, p: float = 1.0) -> float:
    """Scaling ``alpha**p`` of the logarithmic potential, ``alpha`` in (0, 1]."""
    if not alpha > 0:
        raise ValueError(f"phi needs alpha > 0, got {alpha}")
    if not p > 0:
        raise ValueError(f"phi needs p > 0, got {p}")
    return float(alpha) ** p


def _simpson_antiderivative(f, r, n=64):
    """``int_0^r f`` by composite Simpson with ``n`` subintervals (vectorized in r)."""
    r = np.asarray(r, dtype=float)
    s = np.linspace(0.0, 1.0, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    pts = r[..., None] * s
    return r * np.sum(w * f(pts), axis=-1) / (3 * n)


@dataclass(frozen=True)
class PotentialSet:
    """The smooth nonlinearities ``g``, ``pi``, ``pi_Gamma`` and ``phi``'s exponent.

    ``g`` must be nonnegative and concave on ``[-1, 1]``; this is checked on
    1001 sample points at construction.  ``pi_hat`` and ``piG_hat`` are the
    antiderivatives vanishing at 0; when not given they are computed by
    64-interval composite Simpson.
    """

    g: Callable
    dg: Callable
    d2g: Callable
    d3g: Callable
    pi: Callable
    dpi: Callable
    piG: Callable
    dpiG: Callable
    p_exponent: float = 1.0
    pi_hat: Optional[Callable] = field(default=None, compare=False)
    piG_hat: Optional[Callable] = field(default=None, compare=False)
    name: str = "custom"

    def __post_init__(self):
        if not self.p_exponent > 0:
            raise AssumptionError(f"p_exponent must be > 0, got {self.p_exponent}")
        s = np.linspace(-1.0, 1.0, 1001)
        for fname in ("g", "dg", "d2g", "d3g", "pi", "dpi", "piG", "dpiG"):
            vals = np.broadcast_to(getattr(self, fname)(s), s.shape)
            if not np.all(np.isfinite(vals)):
                raise AssumptionError(f"(A2): {fname} not finite on [-1,1]")
        gv = np.broadcast_to(self.g(s), s.shape)
        if np.any(gv < 0):
            r = s[np.argmax(gv < 0)]
            raise AssumptionError(f"(A2): g negative at rho={r:g}")
        d2 = np.broadcast_to(self.d2g(s), s.shape)
        if np.any(d2 > 0):
            r = s[np.argmax(d2 > 0)]
            raise AssumptionError(f"(A2): g not concave (g''>0) at rho={r:g}")

    def phi(self, alpha: float) -> float:
        return phi(alpha, self.p_exponent)

    def pi_antiderivative(self, r):
        if self.pi_hat is not None:
            return self.pi_hat(r)
        return _simpson_antiderivative(self.pi, r)

    def piG_antiderivative(self, r):
        if self.piG_hat is not None:
            return self.piG_hat(r)
        return _simpson_antiderivative(self.piG, r)

    @classmethod
    def from_polynomials(cls, g_coeffs, pi_coeffs, piG_coeffs, p_exponent=1.0,
                         name="polynomial"):
        """Build a set from power-series coefficients (lowest degree first)."""
        g = Polynomial(g_coeffs)
        pi = Polynomial(pi_coeffs)
        piG = Polynomial(piG_coeffs)
        return cls(g=g, dg=g.deriv(1), d2g=g.deriv(2), d3g=g.deriv(3),
                   pi=pi, dpi=pi.deriv(), piG=piG, dpiG=piG.deriv(),
                   p_exponent=p_exponent, pi_hat=pi.integ(), piG_hat=piG.integ(),
                   name=name)


def default_potentials(p_exponent: float = 1.0) -> PotentialSet:
    """``g = 1 - r^2/2``, ``pi = pi_Gamma = -r``.

    With the indicator this is the classical double-obstacle well
    ``-r^2/2`` on ``[-1, 1]``.
    """
    return PotentialSet.from_polynomials([1.0, 0.0, -0.5], [0.0, -1.0], [0.0, -1.0],
                                         p_exponent=p_exponent, name="default")


# ---------------------------------------------------------------------------
# indicator subdifferential


LOWER, INACTIVE, UPPER = "lower-active", "inactive", "upper-active"


@dataclass(frozen=True)
class ObstacleMultiplier:
    value: float
    regime: str


@dataclass(frozen=True)
class Violation:
    rho: float
    xi: float
    reason: str
    node: Optional[tuple] = None


def subdifferential_check(rho: float, xi: float, tol: float = 0.0):
    """Classify ``(rho, xi)`` against ``xi in d I_[-1,1](rho)``.

    Returns an :class:`ObstacleMultiplier` or a :class:`Violation`; never
    raises on bad data.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    rho, xi = float(rho), float(xi)
    if not (np.isfinite(rho) and np.isfinite(xi)):
        return Violation(rho, xi, "non-finite value")
    if abs(rho) > 1.0:
        return Violation(rho, xi, "|rho| > 1")
    if rho >= 1.0 - tol:
        if xi >= -tol:
            return ObstacleMultiplier(xi, UPPER)
        return Violation(rho, xi, "negative multiplier at upper obstacle")
    if rho <= -1.0 + tol:
        if xi <= tol:
            return ObstacleMultiplier(xi, LOWER)
        return Violation(rho, xi, "positive multiplier at lower obstacle")
    if abs(xi) <= tol:
        return ObstacleMultiplier(xi, INACTIVE)
    return Violation(rho, xi, "nonzero multiplier strictly inside (-1, 1)")


@dataclass
class MultiplierReport:
    """Nodewise classification of a field pair; ``violations`` empty when valid."""

    regimes: np.ndarray
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def classify_multipliers(rho: np.ndarray, xi: np.ndarray, tol: float = 0.0) -> MultiplierReport:
    """Apply :func:`subdifferential_check` at every node of two arrays."""
    rho = np.asarray(rho, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if rho.shape != xi.shape:
        raise ValueError(f"shape mismatch: {rho.shape} vs {xi.shape}")
    regimes = np.empty(rho.shape, dtype=object)
    violations = []
    for node in np.ndindex(rho.shape):
        res = subdifferential_check(rho[node], xi[node], tol)
        if isinstance(res, Violation):
            violations.append(Violation(res.rho, res.xi, res.reason, node))
            regimes[node] = None
        else:
            regimes[node] = res.regime
    return MultiplierReport(regimes, violations)


# ---------------------------------------------------------------------------
# free energy


def free_energy(rho, rhoG, mu, uG, pot: PotentialSet, grid: StripGrid) -> float:
    """Total free energy, bulk plus surface part.

    Returns ``inf`` when ``|rho| > 1`` anywhere (the indicator term); the
    indicator contributes nothing otherwise.
    """
    rho = np.asarray(rho, dtype=float)
    rhoG = surface_view(rho) if rhoG is None else np.asarray(rhoG, dtype=float)
    if np.any(np.abs(rho) > 1) or np.any(np.abs(rhoG) > 1):
        return float("inf")
    bulk = np.sum(grid.bulk_weights * (pot.pi_antiderivative(rho) - mu * pot.g(rho)))
    bulk += 0.5 * gradient_energy(rho, grid)
    surf = grid.dx * np.sum(pot.piG_antiderivative(rhoG) - uG * rhoG)
    surf += 0.5 * surface_gradient_energy(rhoG, grid)
    return float(bulk + surf)
