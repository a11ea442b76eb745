"""Run configuration: a flat ``section.key = value`` text format.

Blank lines and ``#`` comments are ignored.  Every key must be known, each
may appear once, and required keys have no default.  Field-valued keys
(targets, initial data, the initial control) take a small expression
language, terms joined by `` + ``:

``constant:c``
    a constant.
``mode:amp,mx,ly[,cos|sin]``
    ``amp * cos(2 pi mx x / Lx) * cos(pi ly y / Ly)`` (``sin`` in ``x`` optionally).
``random:amp[,modes[,seed]]``
    seeded combination of low Fourier modes with max-norm ``amp``; the seed
    defaults to ``io.seed``.
``file:path``
    a snapshot in the flat binary format of :mod:`chquench.fieldio`.
``trace``
    (surface targets only) the trace of the matching bulk target.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import AdmissibleSet, ControlProblem
from .cost import CostWeights
from .fieldio import read_field
from .grid import StripGrid, surface_view
from .physics import AssumptionError, PotentialSet, default_potentials
from .problems import smooth_random_field
from .quench import QuenchSchedule
from .state import SolverOptions, validate_initial_data


class ConfigError(ValueError):
    """Malformed or invalid configuration."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


REQUIRED = object()


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _coeffs(s: str) -> tuple:
    return tuple(float(c) for c in s.split(",") if c.strip())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(c) for c in v)
    return str(v)


# key -> (parser, default)
SCHEMA = {
    "grid.Nx": (int, REQUIRED),
    "grid.Ny": (int, REQUIRED),
    "grid.Lx": (float, REQUIRED),
    "grid.Ly": (float, REQUIRED),
    "grid.Nt": (int, REQUIRED),
    "grid.T": (float, REQUIRED),
    "potentials.preset": (str, "default"),
    "potentials.g": (_coeffs, (1.0, 0.0, -0.5)),
    "potentials.pi": (_coeffs, (0.0, -1.0)),
    "potentials.piG": (_coeffs, (0.0, -1.0)),
    "potentials.p_exponent": (float, 1.0),
    "weights.beta1": (float, REQUIRED),
    "weights.beta2": (float, REQUIRED),
    "weights.beta3": (float, REQUIRED),
    "weights.beta4": (float, REQUIRED),
    "weights.beta5": (float, REQUIRED),
    "weights.beta6": (float, REQUIRED),
    "weights.mu_Q": (str, "constant:0"),
    "weights.rho_Q": (str, "constant:0"),
    "weights.rho_Sigma": (str, "trace"),
    "weights.rho_Omega": (str, "constant:0"),
    "weights.rho_Gamma": (str, "trace"),
    "control.u_lower": (float, REQUIRED),
    "control.u_upper": (float, REQUIRED),
    "control.R0": (float, math.inf),
    "control.u0": (str, "constant:0"),
    "init.mu0": (str, "constant:1 + mode:0.5,1,0"),
    "init.rho0": (str, "mode:0.2,1,1,sin"),
    "solver.tol_newton": (float, 1e-11),
    "solver.tol_stat": (float, 1e-6),
    "solver.max_newton": (int, 50),
    "solver.max_pdas": (int, 100),
    "solver.dt_halving_budget": (int, 8),
    "solver.max_iters": (int, 500),
    "quench.alpha0": (float, 0.1),
    "quench.ratio": (float, 0.25),
    "quench.count": (int, 7),
    "gradcheck.directions": (int, 10),
    "gradcheck.tol": (float, 1e-5),
    "io.run_dir": (str, "run"),
    "io.emit_fields": (_bool, True),
    "io.seed": (int, 0),
}

_LINE = re.compile(r"^\s*([A-Za-z_][\w]*\.[A-Za-z_]\w*)\s*=\s*(.*?)\s*$")


@dataclass(frozen=True)
class RunConfig:
    """Typed key/value map with every default materialized."""

    values: tuple
    base_dir: str = "."

    def __getitem__(self, key):
        return dict(self.values)[key]

    def as_dict(self) -> dict:
        return dict(self.values)

    def with_overrides(self, **kv) -> "RunConfig":
        d = self.as_dict()
        for k, v in kv.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            d[key] = v
        return RunConfig(tuple(sorted(d.items())), self.base_dir)

    def resolved_text(self) -> str:
        lines = ["# fully resolved configuration"]
        section = None
        for key in SCHEMA:
            sec = key.split(".")[0]
            if sec != section:
                lines.append("")
                section = sec
            lines.append(f"{key} = {_fmt(self[key])}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, run_dir) -> Path:
        path = Path(run_dir) / "config.resolved"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.resolved_text(), encoding="utf-8")
        return path


def parse_config_text(text: str, base_dir=".") -> RunConfig:
    """Parse and type-check; raises :class:`ConfigError` (with a line number where one applies)."""
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if m is None:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", lineno)
        key, val = m.groups()
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key][1]})", lineno)
        parser = SCHEMA[key][0]
        try:
            seen[key] = (parser(val), lineno)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
    missing = [k for k, (_, d) in SCHEMA.items() if d is REQUIRED and k not in seen]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    values = {k: (seen[k][0] if k in seen else d) for k, (_, d) in SCHEMA.items()}
    return RunConfig(tuple(sorted(values.items())), str(base_dir))


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text, base_dir=path.parent)


# ---------------------------------------------------------------------------
# field expressions


def _term(term: str, grid: StripGrid, seed: int, base_dir: str) -> np.ndarray:
    kind, _, args = term.partition(":")
    kind = kind.strip()
    parts = [a.strip() for a in args.split(",")] if args.strip() else []
    X, Y = grid.mesh()
    if kind == "constant":
        (c,) = parts
        return np.full(grid.bulk_shape, float(c))
    if kind == "mode":
        amp, mx, ly = float(parts[0]), float(parts[1]), float(parts[2])
        trig = {"cos": np.cos, "sin": np.sin}[parts[3] if len(parts) > 3 else "cos"]
        return amp * trig(2 * np.pi * mx * X / grid.Lx) * np.cos(np.pi * ly * Y / grid.Ly)
    if kind == "random":
        amp = float(parts[0])
        modes = int(parts[1]) if len(parts) > 1 else 2
        s = int(parts[2]) if len(parts) > 2 else seed
        return smooth_random_field(grid, np.random.default_rng(s), modes, amp)
    if kind == "file":
        p = Path(args.strip())
        a, _, _ = read_field(p if p.is_absolute() else Path(base_dir) / p)
        if a.shape != grid.bulk_shape:
            raise ValueError(f"file field has shape {a.shape}, grid needs {grid.bulk_shape}")
        return a
    raise ValueError(f"unknown field kind {kind!r}")


def evaluate_field(expr: str, grid: StripGrid, seed: int = 0, base_dir=".") -> np.ndarray:
    """Bulk field described by ``expr`` (terms joined by `` + ``)."""
    terms = re.split(r"\s\+\s", expr.strip())
    return sum(_term(t, grid, seed, str(base_dir)) for t in terms)


# ---------------------------------------------------------------------------
# building the run objects


@dataclass
class RunSetup:
    config: RunConfig
    problem: ControlProblem
    u0: np.ndarray
    schedule: QuenchSchedule
    tol_stat: float
    max_iters: int


def _err(key, exc):
    return ConfigError(f"{key}: {exc}")


def build(cfg: RunConfig, alpha: float | None = None) -> RunSetup:
    """Turn a config into solver objects, running every assumption check first.

    ``alpha`` (when given) is used for the strict-interior check of the
    initial order parameter.
    """
    c = cfg.as_dict()
    try:
        grid = StripGrid(c["grid.Nx"], c["grid.Ny"], c["grid.Lx"], c["grid.Ly"],
                         c["grid.Nt"], c["grid.T"])
    except ValueError as exc:
        raise _err("grid", exc) from None

    preset = c["potentials.preset"]
    try:
        if preset == "default":
            pot = default_potentials(c["potentials.p_exponent"])
        elif preset == "polynomial":
            pot = PotentialSet.from_polynomials(c["potentials.g"], c["potentials.pi"],
                                                c["potentials.piG"], c["potentials.p_exponent"])
        else:
            raise ConfigError(f"potentials.preset must be 'default' or 'polynomial', "
                              f"got {preset!r}")
    except AssumptionError as exc:
        raise ConfigError(str(exc)) from None

    seed, base = c["io.seed"], cfg.base_dir

    def field(key, surface_of=None):
        expr = c[key]
        try:
            if expr.strip() == "trace":
                if surface_of is None:
                    raise ValueError("'trace' is only allowed for surface targets")
                return surface_view(field(surface_of)).copy()
            f = evaluate_field(expr, grid, seed, base)
        except (ValueError, OSError, KeyError) as exc:
            raise _err(key, exc) from None
        return surface_view(f).copy() if surface_of else f

    try:
        w = CostWeights(*(c[f"weights.beta{i}"] for i in range(1, 7)),
                        mu_Q=field("weights.mu_Q"), rho_Q=field("weights.rho_Q"),
                        rho_Sigma=field("weights.rho_Sigma", "weights.rho_Q"),
                        rho_Omega=field("weights.rho_Omega"),
                        rho_Gamma=field("weights.rho_Gamma", "weights.rho_Omega"))
        A = AdmissibleSet(c["control.u_lower"], c["control.u_upper"], c["control.R0"])
    except AssumptionError as exc:
        raise ConfigError(str(exc)) from None

    mu0, rho0 = field("init.mu0"), field("init.rho0")
    a = c["quench.alpha0"] if alpha is None else alpha
    try:
        validate_initial_data(mu0, rho0, a, grid)
        schedule = QuenchSchedule(c["quench.alpha0"], c["quench.ratio"], c["quench.count"])
    except (AssumptionError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    u0 = np.broadcast_to(surface_view(field("control.u0")), (grid.Nt + 1,) + grid.surface_shape)
    u0 = np.array(u0)
    if not A.contains(u0, grid):
        raise ConfigError("(A3): control.u0 is not inside [u_lower, u_upper]")

    opts = SolverOptions(tol_newton=c["solver.tol_newton"], max_newton=c["solver.max_newton"],
                         max_pdas=c["solver.max_pdas"],
                         dt_halving_budget=c["solver.dt_halving_budget"])
    problem = ControlProblem(grid, pot, w, A, mu0, rho0, opts)
    return RunSetup(cfg, problem, u0, schedule, c["solver.tol_stat"], c["solver.max_iters"])
