"""Fourier x Chebyshev discretization of the periodic channel T x [-1, 1].

The x-direction is periodic with length 2*pi and ``nx`` equispaced nodes.
The y-direction uses the ``ny + 1`` Chebyshev-Gauss-Lobatto points
``y_j = cos(pi j / ny)``, ordered from the top wall (y = 1) to the bottom
wall (y = -1).  Field values are stored as real arrays of shape
``(nx, ny + 1)``; spectral data keeps only the non-negative wavenumbers
``k = 0 .. nx/2`` (the real-FFT half spectrum), the negative ones being
complex conjugates.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BlowUpDataError, UsageError

__all__ = [
    "ChannelGrid",
    "PhysField",
    "ModeStack",
    "cheb_diff",
    "clenshaw_curtis_weights",
    "to_spectral",
    "to_physical",
    "project_zero",
    "project_nonzero",
    "ddx",
    "ddy",
    "laplacian",
    "dealias",
    "lp_norm",
    "inner",
    "profile_norm",
]

LX = 2.0 * np.pi


def chebyshev_nodes(n):
    """Gauss-Lobatto points from +1 down to -1, exactly antisymmetric."""
    j = np.arange(n + 1)
    return np.sin(np.pi * (n - 2 * j) / (2 * n))


def cheb_diff(n):
    """Chebyshev collocation first-derivative matrix on ``chebyshev_nodes(n)``.

    Off-diagonal entries follow the closed form; the diagonal uses the
    negative row-sum so that constants are differentiated to zero exactly
    in exact arithmetic.
    """
    y = chebyshev_nodes(n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dy = y[:, None] - y[None, :]
    d = np.outer(c, 1.0 / c) / (dy + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return d


def clenshaw_curtis_weights(n):
    """Quadrature weights on ``chebyshev_nodes(n)`` for integrals over [-1, 1]."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner_idx = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner_idx]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[inner_idx]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner_idx]) / (4 * k**2 - 1)
    w[inner_idx] = 2.0 * v / n
    return w


@dataclass(frozen=True)
class ChannelGrid:
    """Immutable tensor grid; hashable, so it can key operator caches."""

    nx: int
    ny: int
    dealias: bool = True

    def __post_init__(self):
        if self.nx < 8 or self.nx % 2:
            raise UsageError(f"nx must be even and >= 8, got {self.nx}")
        if self.ny < 8:
            raise UsageError(f"ny must be >= 8, got {self.ny}")

    @cached_property
    def x(self):
        return LX * np.arange(self.nx) / self.nx

    @cached_property
    def y(self):
        return chebyshev_nodes(self.ny)

    @cached_property
    def dx(self):
        return LX / self.nx

    @cached_property
    def dy_local(self):
        """Half the distance between neighbouring nodes, per node."""
        y = self.y
        h = np.empty_like(y)
        h[1:-1] = 0.5 * (y[:-2] - y[2:])
        h[0] = y[0] - y[1]
        h[-1] = y[-2] - y[-1]
        return h

    @cached_property
    def D(self):
        d = cheb_diff(self.ny)
        d.setflags(write=False)
        return d

    @cached_property
    def D2(self):
        d2 = self.D @ self.D
        d2.setflags(write=False)
        return d2

    @cached_property
    def weights(self):
        """Clenshaw-Curtis weights in y."""
        w = clenshaw_curtis_weights(self.ny)
        w.setflags(write=False)
        return w

    @cached_property
    def k(self):
        """Non-negative wavenumbers of the half spectrum, 0 .. nx/2."""
        return np.arange(self.nx // 2 + 1)

    @cached_property
    def kx(self):
        """Wavenumbers used for x-derivatives (Nyquist set to zero)."""
        k = self.k.astype(float)
        k[-1] = 0.0
        return k

    @cached_property
    def kmax(self):
        """Largest wavenumber retained by the time stepper."""
        return self.nx // 3 if self.dealias else self.nx // 2 - 1

    @cached_property
    def dealias_mask(self):
        return self.k <= self.nx / 3.0

    @property
    def shape(self):
        return (self.nx, self.ny + 1)

    def mesh(self):
        """Return ``(X, Y)`` node coordinates, each of shape ``(nx, ny+1)``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    # array-level transforms, used by the solvers on raw ndarrays
    def forward(self, values):
        return np.fft.rfft(values, axis=0) / self.nx

    def backward(self, coeffs):
        return np.fft.irfft(coeffs * self.nx, n=self.nx, axis=0)

    def field(self, values):
        return PhysField(self, np.asarray(values, dtype=float))

    def zeros(self):
        return PhysField(self, np.zeros(self.shape))

    def from_function(self, fn):
        X, Y = self.mesh()
        return PhysField(self, np.asarray(fn(X, Y), dtype=float) + 0.0 * X)


@dataclass(eq=False)
class PhysField:
    """Real scalar field sampled on the grid nodes, shape ``(nx, ny+1)``."""

    grid: ChannelGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise UsageError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    def is_finite(self):
        return bool(np.all(np.isfinite(self.values)))

    def copy(self):
        return PhysField(self.grid, self.values.copy())

    def _coerce(self, other):
        if isinstance(other, PhysField):
            if other.grid != self.grid:
                raise UsageError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return PhysField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return PhysField(self.grid, self.values - self._coerce(other))

    def __mul__(self, other):
        return PhysField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return PhysField(self.grid, -self.values)


@dataclass(eq=False)
class ModeStack:
    """Per-wavenumber complex y-profiles of a real field.

    ``coeffs[k]`` holds the profile for ``k = 0 .. nx/2``; negative
    wavenumbers are recovered by conjugation, so the conjugate symmetry of
    a real field holds by construction.
    """

    grid: ChannelGrid
    coeffs: np.ndarray

    def profile(self, k):
        nx = self.grid.nx
        if not -nx // 2 <= k <= nx // 2 - 1:
            raise UsageError(f"wavenumber {k} outside [-{nx // 2}, {nx // 2 - 1}]")
        if k >= 0:
            return self.coeffs[k].copy()
        return np.conj(self.coeffs[-k])

    def profiles(self):
        """Dictionary of all profiles keyed by signed wavenumber."""
        nx = self.grid.nx
        return {k: self.profile(k) for k in range(-nx // 2, nx // 2)}


def _check_finite(f):
    if not f.is_finite():
        raise BlowUpDataError("field contains non-finite values")


def to_spectral(f):
    _check_finite(f)
    return ModeStack(f.grid, f.grid.forward(f.values))


def to_physical(m):
    return PhysField(m.grid, m.grid.backward(m.coeffs))


def project_zero(f):
    mean = f.values.mean(axis=0, keepdims=True)
    return PhysField(f.grid, np.broadcast_to(mean, f.grid.shape).copy())


def project_nonzero(f):
    return PhysField(f.grid, f.values - f.values.mean(axis=0, keepdims=True))


def ddx(f):
    g = f.grid
    return PhysField(g, g.backward(1j * g.kx[:, None] * g.forward(f.values)))


def ddy(f):
    return PhysField(f.grid, f.values @ f.grid.D.T)


def laplacian(f):
    g = f.grid
    fxx = g.backward(-(g.kx[:, None] ** 2) * g.forward(f.values))
    return PhysField(g, fxx + f.values @ g.D2.T)


def dealias(f):
    """Zero every |k| > nx/3 component (2/3 rule)."""
    g = f.grid
    c = g.forward(f.values)
    c[~g.dealias_mask] = 0.0
    return PhysField(g, g.backward(c))


def lp_norm(f, p=2):
    """Quadrature L^p norm over T x I; ``p='inf'`` gives the nodal max."""
    vals = np.abs(f.values if isinstance(f, PhysField) else f)
    if p in (np.inf, "inf"):
        return float(vals.max()) if vals.size else 0.0
    if p not in (1, 2, 4):
        raise UsageError(f"unsupported norm exponent {p!r}")
    g = f.grid
    total = g.dx * np.sum((vals**p) @ g.weights)
    return float(max(total, 0.0) ** (1.0 / p))


def inner(f, g):
    """L^2(T x I) inner product of two real fields."""
    grid = f.grid
    return float(grid.dx * np.sum((f.values * g.values) @ grid.weights))


def profile_norm(grid, profile):
    """L^2(I) norm of a complex y-profile."""
    return float(np.sqrt(np.abs(profile) ** 2 @ grid.weights))
