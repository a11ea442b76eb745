"""Discrete domain for the boundary-controlled system.

The spatial domain is the strip ``[0, Lx) x [0, Ly]``, periodic in ``x``.
Nodes sit at ``x_i = i*dx`` (``i = 0..Nx-1``) and ``y_j = j*dy``
(``j = 0..Ny``).  Rows ``j = 0`` and ``j = Ny`` form the two boundary rings.

Bulk fields are arrays of shape ``(Nx, Ny+1)``; surface fields are arrays of
shape ``(2, Nx)`` (bottom ring first).  :func:`surface_view` returns the
boundary rows of a bulk array as a surface array *without copying*, so the
trace of a bulk field and the corresponding surface field share storage.

Time levels ``t_k = k*dt``, ``k = 0..Nt``; space-time arrays carry the time
index first.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class StripGrid:
    """Uniform space-time grid on the periodic strip."""

    Nx: int
    Ny: int
    Lx: float = 1.0
    Ly: float = 1.0
    Nt: int = 20
    T: float = 1.0

    def __post_init__(self):
        if self.Nx < 4:
            raise ValueError(f"Nx must be >= 4, got {self.Nx}")
        if self.Ny < 2:
            raise ValueError(f"Ny must be >= 2, got {self.Ny}")
        if self.Nt < 1:
            raise ValueError(f"Nt must be >= 1, got {self.Nt}")
        for name in ("Lx", "Ly", "T"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dy(self) -> float:
        return self.Ly / self.Ny

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def bulk_shape(self) -> tuple[int, int]:
        return (self.Nx, self.Ny + 1)

    @property
    def surface_shape(self) -> tuple[int, int]:
        return (2, self.Nx)

    @property
    def n_bulk(self) -> int:
        return self.Nx * (self.Ny + 1)

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.Nx)

    @property
    def y(self) -> np.ndarray:
        return self.dy * np.arange(self.Ny + 1)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.Nt + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``X, Y`` of bulk shape."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def with_time(self, Nt: int | None = None, T: float | None = None) -> "StripGrid":
        return StripGrid(self.Nx, self.Ny, self.Lx, self.Ly,
                         self.Nt if Nt is None else Nt, self.T if T is None else T)

    def zeros_bulk(self, nt: int | None = None) -> np.ndarray:
        shape = self.bulk_shape if nt is None else (nt,) + self.bulk_shape
        return np.zeros(shape)

    def zeros_surface(self, nt: int | None = None) -> np.ndarray:
        shape = self.surface_shape if nt is None else (nt,) + self.surface_shape
        return np.zeros(shape)

    # quadrature weights -------------------------------------------------

    @cached_property
    def bulk_weights(self) -> np.ndarray:
        """Trapezoid in ``y``, uniform (periodic) in ``x``."""
        wy = np.full(self.Ny + 1, self.dy)
        wy[[0, -1]] *= 0.5
        return np.broadcast_to(self.dx * wy, self.bulk_shape).copy()

    @cached_property
    def surface_weights(self) -> np.ndarray:
        return np.full(self.surface_shape, self.dx)

    @cached_property
    def time_weights(self) -> np.ndarray:
        """Composite trapezoid weights over ``k = 0..Nt``."""
        w = np.full(self.Nt + 1, self.dt)
        w[[0, -1]] *= 0.5
        return w

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.bulk_shape, dtype=bool)
        m[:, [0, -1]] = True
        return m

    @cached_property
    def coupled_mass(self) -> np.ndarray:
        """Lumped mass of the pair space ``{(v, v|_Gamma)}``.

        Interior nodes carry their bulk cell ``dx*dy``; a boundary node
        carries its half bulk cell plus its surface cell ``dx``.
        """
        m = self.bulk_weights.copy()
        m[:, [0, -1]] += self.dx
        return m

    def flat(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f).reshape(-1)

    def unflat(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v).reshape(self.bulk_shape)

    @cached_property
    def boundary_index(self) -> np.ndarray:
        """Flat bulk indices of the boundary rows, ordered like a surface field."""
        idx = np.arange(self.n_bulk).reshape(self.bulk_shape)
        return np.concatenate([idx[:, 0], idx[:, -1]])

    # sparse operators ---------------------------------------------------

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """5-point Laplacian, zero rows on the boundary rings."""
        return _laplacian(self, neumann=False)

    @cached_property
    def neumann_laplacian_matrix(self) -> sp.csr_matrix:
        """5-point Laplacian with mirror ghost rows (homogeneous Neumann)."""
        return _laplacian(self, neumann=True)

    @cached_property
    def laplace_beltrami_matrix(self) -> sp.csr_matrix:
        """Ring second difference acting on bulk vectors (boundary rows only)."""
        Nx, Ny1 = self.bulk_shape
        idx = np.arange(self.n_bulk).reshape(self.bulk_shape)
        rows, cols, vals = [], [], []
        c = 1.0 / self.dx**2
        for j in (0, Ny1 - 1):
            for i in range(Nx):
                r = idx[i, j]
                rows += [r, r, r]
                cols += [idx[(i - 1) % Nx, j], r, idx[(i + 1) % Nx, j]]
                vals += [c, -2 * c, c]
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_bulk, self.n_bulk))

    @cached_property
    def normal_derivative_matrix(self) -> sp.csr_matrix:
        """One-sided outward normal derivative, nonzero on boundary rows only."""
        Nx, Ny1 = self.bulk_shape
        idx = np.arange(self.n_bulk).reshape(self.bulk_shape)
        rows, cols, vals = [], [], []
        c = 1.0 / (2 * self.dy)
        for i in range(Nx):
            rows += [idx[i, 0]] * 3
            cols += [idx[i, 0], idx[i, 1], idx[i, 2]]
            vals += [3 * c, -4 * c, c]
            rows += [idx[i, -1]] * 3
            cols += [idx[i, -1], idx[i, -2], idx[i, -3]]
            vals += [3 * c, -4 * c, c]
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_bulk, self.n_bulk))

    @cached_property
    def rho_operator(self) -> sp.csr_matrix:
        """Spatial operator of the order-parameter equation.

        ``-Laplacian`` on interior rows and ``d_n - Laplace-Beltrami`` on the
        boundary rows, so that the backward-Euler step reads
        ``(I/dt + K) rho_new + reaction = rhs``.
        """
        K = -self.laplacian_matrix + self.normal_derivative_matrix - self.laplace_beltrami_matrix
        return K.tocsr()

    @cached_property
    def rho_shifted(self) -> "DiagonalShift":
        return DiagonalShift(self.rho_operator)

    @cached_property
    def rho_shifted_T(self) -> "DiagonalShift":
        return DiagonalShift(self.rho_operator.T)

    @cached_property
    def mu_shifted(self) -> "DiagonalShift":
        return DiagonalShift(-self.neumann_laplacian_matrix)

    @cached_property
    def mu_shifted_T(self) -> "DiagonalShift":
        return DiagonalShift(-self.neumann_laplacian_matrix.T)


class DiagonalShift:
    """``B + diag(d)`` for many ``d`` on a fixed CSC sparsity pattern."""

    def __init__(self, B):
        B = sp.csc_matrix(B)
        n = B.shape[0]
        C = (B + sp.identity(n, format="csc")).tocsc()
        C.sort_indices()
        pos = np.empty(n, dtype=np.int64)
        for col in range(n):
            lo, hi = C.indptr[col], C.indptr[col + 1]
            pos[col] = lo + np.searchsorted(C.indices[lo:hi], col)
        C.data[pos] = B.diagonal()
        self.base = C
        self.diag_pos = pos

    def __call__(self, d) -> sp.csc_matrix:
        M = self.base.copy()
        M.data[self.diag_pos] += d
        return M


def _laplacian(grid: StripGrid, neumann: bool) -> sp.csr_matrix:
    Nx, Ny1 = grid.bulk_shape
    idx = np.arange(grid.n_bulk).reshape(grid.bulk_shape)
    cx, cy = 1.0 / grid.dx**2, 1.0 / grid.dy**2
    rows, cols, vals = [], [], []
    for i in range(Nx):
        for j in range(Ny1):
            boundary = j in (0, Ny1 - 1)
            if boundary and not neumann:
                continue
            r = idx[i, j]
            rows += [r, r, r]
            cols += [idx[(i - 1) % Nx, j], idx[(i + 1) % Nx, j], r]
            vals += [cx, cx, -2 * cx - 2 * cy]
            if j == 0:
                rows.append(r); cols.append(idx[i, 1]); vals.append(2 * cy)
            elif j == Ny1 - 1:
                rows.append(r); cols.append(idx[i, j - 1]); vals.append(2 * cy)
            else:
                rows += [r, r]
                cols += [idx[i, j - 1], idx[i, j + 1]]
                vals += [cy, cy]
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_bulk, grid.n_bulk))


# ---------------------------------------------------------------------------
# stencil form of the operators (array in, array out)


def surface_view(f: np.ndarray) -> np.ndarray:
    """Boundary rows of a bulk array (``(..., Nx, Ny+1)``) as ``(..., 2, Nx)``.

    The result is a view: writing to it writes the bulk field.
    """
    Ny = f.shape[-1] - 1
    return np.swapaxes(f[..., ::Ny], -1, -2)


def laplacian_bulk(f: np.ndarray, grid: StripGrid, neumann: bool = False) -> np.ndarray:
    """5-point Laplacian, periodic in x.

    With ``neumann=False`` the boundary rows are returned as zero (their
    dynamics live in the surface equation).  With ``neumann=True`` a mirror
    ghost row ``f[-1] = f[1]`` is used so the result is defined on all rows.
    """
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    cx, cy = 1.0 / grid.dx**2, 1.0 / grid.dy**2
    xx = (np.roll(f, 1, axis=0) - 2 * f + np.roll(f, -1, axis=0)) * cx
    out[:, 1:-1] = xx[:, 1:-1] + (f[:, :-2] - 2 * f[:, 1:-1] + f[:, 2:]) * cy
    if neumann:
        out[:, 0] = xx[:, 0] + 2 * (f[:, 1] - f[:, 0]) * cy
        out[:, -1] = xx[:, -1] + 2 * (f[:, -2] - f[:, -1]) * cy
    return out


def laplace_beltrami(fG: np.ndarray, grid: StripGrid) -> np.ndarray:
    """Periodic 3-point second difference along each ring."""
    fG = np.asarray(fG, dtype=float)
    return (np.roll(fG, 1, axis=-1) - 2 * fG + np.roll(fG, -1, axis=-1)) / grid.dx**2


def normal_derivative(f: np.ndarray, grid: StripGrid) -> np.ndarray:
    """Second-order one-sided outward normal derivative on both rings.

    The outward normal is ``-e_y`` on the bottom ring and ``+e_y`` on the
    top ring.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[-1] < 3:
        raise ValueError("normal_derivative needs Ny >= 2")
    c = 1.0 / (2 * grid.dy)
    bottom = (3 * f[:, 0] - 4 * f[:, 1] + f[:, 2]) * c
    top = (3 * f[:, -1] - 4 * f[:, -2] + f[:, -3]) * c
    return np.stack([bottom, top])


def gradient_energy(f: np.ndarray, grid: StripGrid) -> float:
    """Forward-difference ``int |grad f|^2`` over the strip.

    The quadrature is the one for which ``gradient_energy(f) ==
    -inner_l2_bulk(laplacian_bulk(f, neumann=True), f)`` holds exactly
    (summation by parts).
    """
    f = np.asarray(f, dtype=float)
    wy = np.full(grid.Ny + 1, grid.dy)
    wy[[0, -1]] *= 0.5
    gx = (np.roll(f, -1, axis=0) - f) / grid.dx
    gy = (f[:, 1:] - f[:, :-1]) / grid.dy
    return float(grid.dx * np.sum(gx**2 * wy) + grid.dx * grid.dy * np.sum(gy**2))


def surface_gradient_energy(fG: np.ndarray, grid: StripGrid) -> float:
    """Forward-difference ``int_Gamma |grad_Gamma f|^2``."""
    g = (np.roll(fG, -1, axis=-1) - fG) / grid.dx
    return float(grid.dx * np.sum(g**2))


def _check_shapes(f, g):
    if np.shape(f) != np.shape(g):
        raise ValueError(f"shape mismatch: {np.shape(f)} vs {np.shape(g)}")


def inner_l2_bulk(f: np.ndarray, g: np.ndarray, grid: StripGrid) -> float:
    _check_shapes(f, g)
    if np.shape(f) != grid.bulk_shape:
        raise ValueError(f"expected bulk shape {grid.bulk_shape}, got {np.shape(f)}")
    return float(np.sum(grid.bulk_weights * f * g))


def inner_l2_surface(fG: np.ndarray, gG: np.ndarray, grid: StripGrid) -> float:
    _check_shapes(fG, gG)
    if np.shape(fG) != grid.surface_shape:
        raise ValueError(f"expected surface shape {grid.surface_shape}, got {np.shape(fG)}")
    return float(grid.dx * np.sum(fG * gG))


def inner_l2_spacetime(f: np.ndarray, g: np.ndarray, grid: StripGrid) -> float:
    """``L2(Q)`` or ``L2(Sigma)`` inner product of ``(Nt+1, ...)`` arrays.

    Bulk or surface quadrature is picked from the trailing shape; time uses
    the composite trapezoid rule.
    """
    _check_shapes(f, g)
    shape = np.shape(f)
    if shape[0] != grid.Nt + 1:
        raise ValueError(f"expected {grid.Nt + 1} time levels, got {shape[0]}")
    if shape[1:] == grid.bulk_shape:
        w = grid.bulk_weights
    elif shape[1:] == grid.surface_shape:
        w = grid.surface_weights
    else:
        raise ValueError(f"unrecognised field shape {shape[1:]}")
    per_level = np.sum(w * np.asarray(f) * np.asarray(g), axis=(1, 2))
    return float(np.dot(grid.time_weights, per_level))


def norm_l2_spacetime(f: np.ndarray, grid: StripGrid) -> float:
    return float(np.sqrt(max(inner_l2_spacetime(f, f, grid), 0.0)))
