"""Per-wavenumber boundary-value solves in y.

* chemoattractant: ``-(c'' - k^2 c) + c = n`` with Dirichlet or Neumann walls;
* streamfunction: ``Phi'' - k^2 Phi = omega`` with ``Phi(+-1) = 0``, k != 0;
* velocity recovery ``u = (d_y Phi, -d_x Phi)``.

Boundary conditions replace the first and last collocation rows.  LU
factorizations are cached per (ny, |k|, boundary condition).
"""

import threading
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.linalg as la

from .errors import SolverError, UsageError
from .grid import ModeStack, PhysField, to_spectral

WALL_CURVATURE_TOL = 1e-8


class DensityBC(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"

    @classmethod
    def coerce(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise UsageError(f"unknown boundary condition {value!r}") from None


def bc_rows(grid, bc):
    """The two constraint rows (top, bottom wall) for a boundary condition."""
    bc = DensityBC.coerce(bc)
    n = grid.ny
    if bc is DensityBC.DIRICHLET:
        rows = np.zeros((2, n + 1))
        rows[0, 0] = rows[1, n] = 1.0
        return rows
    return grid.D[[0, n], :].copy()


def helmholtz_matrix(grid, k, bc):
    n = grid.ny
    m = -grid.D2 + (k * k + 1.0) * np.eye(n + 1)
    m[[0, n], :] = bc_rows(grid, bc)
    return m


def poisson_matrix(grid, k):
    n = grid.ny
    m = grid.D2 - (k * k) * np.eye(n + 1)
    m[[0, n], :] = bc_rows(grid, DensityBC.DIRICHLET)
    return m


_cache_lock = threading.Lock()
_factor_cache = {}


def _factor(kind, grid, k, bc=None):
    key = (kind, grid.ny, abs(int(k)), bc)
    lu = _factor_cache.get(key)
    if lu is not None:
        return lu
    if kind == "helmholtz":
        mat = helmholtz_matrix(grid, k, bc)
    else:
        mat = poisson_matrix(grid, k)
    try:
        lu = la.lu_factor(mat, check_finite=True)
    except (ValueError, la.LinAlgError) as exc:
        raise SolverError(f"{kind} factorization failed for k={k}") from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(mat).max()):
        raise SolverError(f"singular {kind} collocation matrix for k={k}")
    with _cache_lock:
        _factor_cache.setdefault(key, lu)
    return lu


def clear_cache():
    with _cache_lock:
        _factor_cache.clear()
    chemo_operator_stack.cache_clear()
    stream_operator_stack.cache_clear()


def _mode_multiplicity(grid):
    mult = np.full(grid.nx // 2 + 1, 2.0)
    mult[0] = 1.0
    mult[-1] = 1.0
    return mult


def modes_l2(grid, coeffs):
    """L^2(T x I) norm of a real field from its half spectrum (Parseval)."""
    per_k = (np.abs(coeffs) ** 2) @ grid.weights
    return float(np.sqrt(2.0 * np.pi * np.sum(_mode_multiplicity(grid) * per_k)))


@dataclass
class HelmholtzSolve:
    rhs: ModeStack
    solution: ModeStack
    residual: float


@dataclass
class StreamSolve:
    vorticity: ModeStack
    stream: ModeStack
    velocity: tuple
    wall_curvature: float

    @property
    def wall_curvature_ok(self):
        scale = max(modes_l2(self.vorticity.grid, self.vorticity.coeffs), 1.0)
        return self.wall_curvature <= WALL_CURVATURE_TOL * scale


def helmholtz_solve(rhs, bc):
    """Solve the screened Poisson problem mode by mode; ``rhs`` is a ModeStack."""
    bc = DensityBC.coerce(bc)
    grid = rhs.grid
    n = grid.ny
    sol = np.zeros_like(rhs.coeffs, dtype=complex)
    res = np.zeros_like(sol)
    for k in grid.k:
        b = rhs.coeffs[k].astype(complex)
        b[[0, n]] = 0.0
        lu = _factor("helmholtz", grid, k, bc.value)
        sol[k] = la.lu_solve(lu, b)
        res[k] = helmholtz_matrix(grid, k, bc) @ sol[k] - b
    if not np.all(np.isfinite(sol)):
        raise SolverError("non-finite Helmholtz solution")
    residual = modes_l2(grid, res)
    return HelmholtzSolve(rhs, ModeStack(grid, sol), residual)


def solve_chemo(n_total, bc):
    """Chemoattractant ``c`` from the total density, inheriting the density BC."""
    hs = helmholtz_solve(to_spectral(n_total), bc)
    return PhysField(n_total.grid, n_total.grid.backward(hs.solution.coeffs))


def stream_solve(omega):
    """Streamfunction and velocity of the non-zero modes of ``omega``."""
    grid = omega.grid
    n = grid.ny
    w = to_spectral(omega)
    phi = np.zeros_like(w.coeffs)
    curvature = 0.0
    for k in grid.k[1:]:
        b = w.coeffs[k].copy()
        b[[0, n]] = 0.0
        phi[k] = la.lu_solve(_factor("poisson", grid, k), b)
        wall_dd = (grid.D2 @ phi[k])[[0, n]]
        curvature = max(curvature, float(np.abs(wall_dd).max()))
    u1 = grid.backward(phi @ grid.D.T)
    u2 = grid.backward(-1j * grid.kx[:, None] * phi)
    return StreamSolve(
        vorticity=w,
        stream=ModeStack(grid, phi),
        velocity=(PhysField(grid, u1), PhysField(grid, u2)),
        wall_curvature=curvature,
    )


def solve_stream_velocity(omega):
    """Return ``(Phi_ne, u1_ne, u2_ne)`` for the non-zero modes of ``omega``."""
    s = stream_solve(omega)
    grid = omega.grid
    return PhysField(grid, grid.backward(s.stream.coeffs)), s.velocity[0], s.velocity[1]


def zero_mode_velocity(grid, u01):
    """Embed an x-independent profile as the first velocity component."""
    u01 = np.asarray(u01, dtype=float)
    if u01.shape != (grid.ny + 1,):
        raise UsageError("u01 profile must have ny + 1 entries")
    return PhysField(grid, np.broadcast_to(u01, grid.shape).copy())


# Batched operators for the time stepper.  Each stack maps the k-th
# half-spectrum profile (boundary entries ignored) to the solution profile.

@lru_cache(maxsize=32)
def chemo_operator_stack(grid, bc, kmax):
    bc = DensityBC.coerce(bc)
    n = grid.ny
    zero_rows = np.eye(n + 1)
    zero_rows[[0, n], [0, n]] = 0.0
    ops = np.empty((kmax + 1, n + 1, n + 1))
    for k in range(kmax + 1):
        ops[k] = la.lu_solve(_factor("helmholtz", grid, k, bc.value), zero_rows)
    ops.setflags(write=False)
    return ops


@lru_cache(maxsize=32)
def stream_operator_stack(grid, kmax):
    n = grid.ny
    zero_rows = np.eye(n + 1)
    zero_rows[[0, n], [0, n]] = 0.0
    ops = np.zeros((kmax + 1, n + 1, n + 1))
    for k in range(1, kmax + 1):
        ops[k] = la.lu_solve(_factor("poisson", grid, k), zero_rows)
    ops.setflags(write=False)
    return ops
