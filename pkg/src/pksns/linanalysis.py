"""Linear analysis of the Orr-Sommerfeld-type operator of plane Poiseuille flow.

For a streamwise wavenumber ``k`` the linearized advection-diffusion
operator acts on y-profiles vanishing at the walls as

    L f = -(1/A) (f'' - k^2 f) + i k (1 - y^2) f.

It is discretized on the interior Chebyshev nodes, where the Dirichlet
condition is exact.  Norms are discrete L^2(I) norms with Clenshaw-Curtis
weights; conjugating by the square-root weights turns them into plain
Euclidean norms, so matrix singular values are operator singular values.
The optional nonlocal term ``2 i k (d_yy - k^2)^{-1}`` gives the
linearized vorticity operator.
"""

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as la
from scipy import optimize, stats

from .diagnostics import XaAccumulator, update_xa_values
from .dynamics import _phi_functions
from .errors import SolverError, UsageError
from .fieldio import format_float
from .grid import ChannelGrid
from .parallel import parallel_map

DEFAULT_NY = 128


# ----------------------------------------------------------------------
# operator

@dataclass(frozen=True)
class OSOperator:
    A: float
    k: int
    ny: int = DEFAULT_NY
    nonlocal_term: bool = False

    def __post_init__(self):
        if self.A < 1:
            raise UsageError(f"A must be >= 1, got {self.A}")
        if int(self.k) != self.k or self.k == 0:
            raise UsageError(f"k must be a nonzero integer, got {self.k}")

    @property
    def grid(self):
        return ChannelGrid(8, self.ny)

    @property
    def y(self):
        return self.grid.y

    @property
    def sqrt_w(self):
        return np.sqrt(self.grid.weights[1:-1])

    @property
    def interior(self):
        """The operator on interior nodes (walls eliminated by f(+-1) = 0)."""
        return _interior_matrix(self.A, self.k, self.ny, self.nonlocal_term)

    @property
    def matrix(self):
        """Full collocation matrix with the wall rows replaced by f(+-1) = 0."""
        g, n = self.grid, self.ny
        k, nu = self.k, 1.0 / self.A
        m = nu * (k * k * np.eye(n + 1) - g.D2) + 1j * k * np.diag(1.0 - g.y**2)
        m = m.astype(complex)
        if self.nonlocal_term:
            m[1:n, 1:n] += 2j * k * _poisson_inverse(k, n)
        m[[0, n], :] = 0.0
        m[0, 0] = m[n, n] = 1.0
        return m

    @property
    def weighted(self):
        return _weighted_matrix(self.A, self.k, self.ny, self.nonlocal_term)

    def inner(self, f, g):
        """Weighted L^2(I) inner product of interior profiles."""
        w = self.grid.weights[1:-1]
        return complex(np.sum(w * f * np.conj(g)))

    def random_profiles(self, rng, count):
        """Smooth interior profiles whose quadratic forms CC quadrature integrates exactly."""
        g = self.grid
        deg = max(self.ny // 2 - 1, 1)
        theta = np.arccos(np.clip(g.y, -1.0, 1.0))
        basis = np.cos(np.outer(np.arange(deg), theta)) * (1.0 - g.y**2)
        out = []
        for _ in range(count):
            c = (rng.standard_normal(deg) + 1j * rng.standard_normal(deg)) / (1.0 + np.arange(deg))
            f = (c @ basis)[1:-1]
            out.append(f / math.sqrt(self.inner(f, f).real))
        return out

    def accretivity(self, rng=None, samples=200):
        """Minimum of Re<L f, f> over random smooth unit profiles."""
        rng = np.random.default_rng(0) if rng is None else rng
        L = self.interior
        return min(self.inner(L @ f, f).real for f in self.random_profiles(rng, samples))

    def dissipation(self, f):
        """(1/A)(||f'||^2 + k^2 ||f||^2) for an interior profile."""
        g = self.grid
        full = np.zeros(self.ny + 1, dtype=complex)
        full[1:-1] = f
        d = g.D @ full
        w = g.weights
        return (float(np.sum(w * np.abs(d) ** 2)) + self.k**2 * float(np.sum(w * np.abs(full) ** 2))) / self.A


@lru_cache(maxsize=64)
def _poisson_inverse(k, ny):
    g = ChannelGrid(8, ny)
    lap = g.D2[1:-1, 1:-1] - (k * k) * np.eye(ny - 1)
    return np.linalg.inv(lap)


@lru_cache(maxsize=64)
def _interior_matrix(A, k, ny, nonlocal_term):
    g = ChannelGrid(8, ny)
    inner = slice(1, -1)
    m = (1.0 / A) * (k * k * np.eye(ny - 1) - g.D2[inner, inner])
    m = m + 1j * k * np.diag(1.0 - g.y[inner] ** 2)
    if nonlocal_term:
        m = m + 2j * k * _poisson_inverse(k, ny)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=64)
def _weighted_matrix(A, k, ny, nonlocal_term):
    sw = np.sqrt(ChannelGrid(8, ny).weights[1:-1])
    m = (sw[:, None] * _interior_matrix(A, k, ny, nonlocal_term)) / sw[None, :]
    m.setflags(write=False)
    return m


def solve_os_resolvent(A, k, lam, F, nonlocal_term=False):
    """Solve ``L f - i k lam f = F`` with ``f(+-1) = 0``.

    ``F`` is a full profile on the ``len(F) - 1``-degree Chebyshev grid;
    its wall entries are ignored.
    """
    F = np.asarray(F, dtype=complex)
    op = OSOperator(float(A), int(k), F.size - 1, nonlocal_term)
    n = op.ny
    m = op.matrix
    m[1:n, 1:n] -= 1j * op.k * lam * np.eye(n - 1)
    rhs = F.copy()
    rhs[[0, n]] = 0.0
    try:
        f = la.solve(m, rhs)
    except la.LinAlgError as exc:
        raise SolverError(f"singular resolvent system at lambda={lam}") from exc
    f[[0, n]] = 0.0
    res = m[1:n] @ f - rhs[1:n]
    scale = max(np.abs(rhs).max(), 1e-300)
    if not np.all(np.isfinite(f)) or np.abs(res).max() > 1e-10 * scale * max(1.0, np.abs(m).max() * 1e-6):
        raise SolverError(f"resolvent solve inaccurate at lambda={lam}")
    return f


# ----------------------------------------------------------------------
# smallest singular values

def sigma_min_svd(op, shift):
    """Smallest singular value of ``L - i shift`` in the weighted norm."""
    m = op.weighted - 1j * shift * np.eye(op.ny - 1)
    return float(la.svdvals(m)[-1])


def sigma_min_inverse(op, shift, tol=1e-14, maxiter=500, seed=0, block=4):
    """Same quantity by inverse subspace iteration on ``B^H B``.

    The operator commutes with the reflection y -> -y, so its smallest
    singular values come in nearly equal even/odd pairs; a small block
    with a Rayleigh-Ritz step converges where a single vector stalls.
    """
    m = op.weighted - 1j * shift * np.eye(op.ny - 1)
    lu = la.lu_factor(m)
    rng = np.random.default_rng(seed)
    size = m.shape[0]
    X = rng.standard_normal((size, block)) + 1j * rng.standard_normal((size, block))
    X, _ = np.linalg.qr(X)
    prev = 0.0
    for _ in range(maxiter):
        Y = la.lu_solve(lu, X)
        top = float(la.svdvals(Y)[0])  # Ritz estimate of 1/sigma_min
        if abs(top - prev) <= tol * top:
            break
        prev = top
        X, _ = np.linalg.qr(la.lu_solve(lu, Y, trans=2))
    return 1.0 / top


def regime(lam):
    if lam < 0:
        return "below"
    if lam > 1:
        return "above"
    return "critical"


def default_lambda_grid(per_regime=12):
    """Resolvent shifts for the three regimes, refined near the centerline value 1."""
    near = np.geomspace(1e-4, 1.0, per_regime)
    below = -np.geomspace(2.0, 1e-3, per_regime)
    crit = np.unique(np.concatenate([np.linspace(0.0, 1.0, per_regime + 1), 1.0 - near]))
    above = 1.0 + np.geomspace(1e-4, 2.0, per_regime)
    return np.concatenate([below, crit, above])


@dataclass
class ResolventRow:
    A: float
    k: int
    lam: float
    sigma_min: float
    regime: str


@dataclass
class ResolventCell:
    A: float
    k: int
    lam_star: float
    sigma_star: float
    C_emp: float
    regime_star: str
    error: str = ""


@dataclass
class ResolventScan:
    rows: list = field(default_factory=list)
    cells: list = field(default_factory=list)

    def cell(self, A, k):
        for c in self.cells:
            if c.A == A and c.k == k:
                return c
        raise KeyError((A, k))

    def slope(self, k):
        """Log-log slope of sup ||f||/||F|| = 1/sigma_star against A."""
        cs = [c for c in self.cells if c.k == k and not c.error]
        return fit_loglog([c.A for c in cs], [1.0 / c.sigma_star for c in cs])

    def to_csv(self):
        return rows_to_csv(["A", "k", "lambda", "value", "regime"],
                           [[r.A, r.k, r.lam, r.sigma_min, r.regime] for r in self.rows])

    def summary(self):
        ks = sorted({c.k for c in self.cells})
        out = {"cells": [asdict(c) for c in self.cells], "slopes": {}}
        for k in ks:
            if sum(1 for c in self.cells if c.k == k and not c.error) >= 2:
                out["slopes"][str(k)] = asdict(self.slope(k))
        return out


def _scan_cell(args):
    A, k, lams, ny, refine = args
    op = OSOperator(float(A), int(k), ny)
    rows = []
    try:
        sig = [sigma_min_svd(op, k * lam) for lam in lams]
        rows = [ResolventRow(A, k, float(lam), s, regime(lam)) for lam, s in zip(lams, sig)]
        i = int(np.argmin(sig))
        lam_star, s_star = float(lams[i]), sig[i]
        if refine:
            lo, hi = lams[max(i - 1, 0)], lams[min(i + 1, len(lams) - 1)]
            if hi > lo:
                res = optimize.minimize_scalar(lambda l: sigma_min_svd(op, k * l), bounds=(lo, hi),
                                               method="bounded", options={"xatol": 1e-10})
                if res.fun < s_star:
                    lam_star, s_star = float(res.x), float(res.fun)
        C = abs(k) ** 0.5 / math.sqrt(A) / s_star
        return rows, ResolventCell(A, k, lam_star, s_star, C, regime(lam_star))
    except (SolverError, la.LinAlgError, ValueError) as exc:
        return rows, ResolventCell(A, k, math.nan, math.nan, math.nan, "", str(exc))


def scan_resolvent(A_list, k_list, lam_spec=None, ny=DEFAULT_NY, refine=True, workers=1):
    """Sweep ``sigma_min(L - i k lam)`` over a shift grid for each (A, k)."""
    A_list, k_list = list(A_list), list(k_list)
    if not A_list or not k_list:
        raise UsageError("scan_resolvent needs nonempty A and k lists")
    lams = np.sort(np.asarray(default_lambda_grid() if lam_spec is None else lam_spec, float))
    tasks = [(A, k, lams, ny, refine) for A in A_list for k in k_list]
    scan = ResolventScan()
    for rows, cell in parallel_map(_scan_cell, tasks, workers):
        scan.rows.extend(rows)
        scan.cells.append(cell)
    return scan


# ----------------------------------------------------------------------
# pseudospectral quantity

def default_mu_grid(k, width=2.2, count=45, near=40):
    """Imaginary shifts spanning [-width|k|, width|k|], dense near the resonance -k."""
    ka = abs(k)
    base = np.linspace(-width * ka, width * ka, count)
    offsets = np.geomspace(1e-6, width, near) * ka
    centre = -float(k)
    return np.unique(np.concatenate([base, centre + offsets, centre - offsets, [centre]]))


@dataclass
class PsiResult:
    A: float
    k: int
    psi: float
    mu_star: float
    c_prime: float = None
    bound: float = None

    @property
    def bound_ok(self):
        return None if self.bound is None else self.psi >= self.bound

    def __float__(self):
        return self.psi


def compute_psi(A, k, mu_grid=None, ny=DEFAULT_NY, c_prime=None, retries=3):
    """``min_mu sigma_min(L - i mu)`` with golden-section refinement."""
    op = OSOperator(float(A), int(k), ny)
    mus = np.sort(np.asarray(default_mu_grid(k) if mu_grid is None else mu_grid, float))
    for _ in range(retries + 1):
        vals = np.array([sigma_min_svd(op, m) for m in mus])
        i = int(np.argmin(vals))
        if 0 < i < len(mus) - 1:
            break
        half = 0.5 * (mus[-1] - mus[0])
        mid = 0.5 * (mus[-1] + mus[0])
        mus = np.unique(np.concatenate([mus, np.linspace(mid - 2 * half, mid + 2 * half, len(mus))]))
    else:
        raise SolverError(f"Psi minimum stuck at the edge of the shift grid (A={A}, k={k})")
    fn = lambda m: sigma_min_svd(op, m)
    lo, mid, hi = mus[i - 1], mus[i], mus[i + 1]
    mu_star = float(optimize.golden(fn, brack=(lo, mid, hi), tol=1e-10))
    psi = fn(mu_star)
    if psi > vals[i]:
        mu_star, psi = float(mid), float(vals[i])
    bound = None
    if c_prime is not None:
        bound = c_prime * abs(k) ** 0.5 / math.sqrt(A) + k * k / A
    return PsiResult(float(A), int(k), max(psi, 0.0), mu_star, c_prime, bound)


# ----------------------------------------------------------------------
# semigroup decay

@dataclass
class DecayFit:
    A: float
    k: int
    times: list
    norms: list
    rate: float
    prefactor: float
    residual: float
    nonlocal_term: bool = False

    @property
    def c_prime(self):
        """Rate coefficient of A^{-1/2} after removing the bare 1/A part."""
        return (self.rate - 1.0 / self.A) * math.sqrt(self.A)


def default_decay_times(A, count=41, horizon=12.0):
    return np.linspace(0.0, horizon * math.sqrt(A), count)


def semigroup_norms(op, times):
    """Weighted operator 2-norms of ``exp(-t L)``, accumulated in log form."""
    M = op.weighted
    times = np.asarray(times, float)
    logs = []
    shift = float(np.linalg.eigvals(M).real.min())
    for t in times:
        if t == 0:
            logs.append(0.0)
            continue
        E = la.expm(-t * (M - shift * np.eye(M.shape[0])))
        logs.append(math.log(np.linalg.norm(E, 2)) - shift * t)
    return np.array(logs)


def measure_semigroup_decay(A, k, t_samples=None, ny=DEFAULT_NY, nonlocal_term=False, tail=0.5):
    """Decay rate of ``||exp(-t L)||`` from a log-linear fit over the tail samples."""
    ts = np.asarray(default_decay_times(A) if t_samples is None else t_samples, float)
    if ts.size < 3 or np.any(np.diff(ts) <= 0) or ts[0] < 0:
        raise UsageError("t_samples must be non-negative, strictly increasing, at least 3")
    op = OSOperator(float(A), int(k), ny, nonlocal_term)
    logs = semigroup_norms(op, ts)
    start = min(int(len(ts) * tail), len(ts) - 2)
    slope, intercept = np.polyfit(ts[start:], logs[start:], 1)
    resid = logs[start:] - (slope * ts[start:] + intercept)
    return DecayFit(float(A), int(k), ts.tolist(), np.exp(logs).tolist(), float(-slope),
                    float(math.exp(intercept)), float(np.sqrt(np.mean(resid**2))), nonlocal_term)


def decay_to_csv(fits):
    rows = []
    for f in fits:
        tag = "vorticity" if f.nonlocal_term else "density"
        rows.extend([f.A, f.k, t, v, tag] for t, v in zip(f.times, f.norms))
    return rows_to_csv(["A", "k", "t", "value", "regime"], rows)


def calibrate_c_prime(fits):
    """Smallest fitted c' over the given fits; the default X_a exponent is half of it."""
    return min(f.c_prime for f in fits)


# ----------------------------------------------------------------------
# time-space estimate

@dataclass
class Forcing:
    """Flux forcing ``f2`` on one x-wavenumber.

    ``kind='worst'``: time-harmonic forcing with the y-profile and
    frequency that maximize the steady ratio (leading singular pair).
    ``kind='profile'``: the given ``gx, gy`` profiles (callables of y),
    modulated by ``exp(i mu t)``.
    ``kind='none'``: no forcing.
    In all cases the flux carries the factor ``exp(-a t / sqrt(A))`` so that
    its weighted norm is constant in time.
    """

    kind: str = "worst"
    amplitude: float = 1.0
    mu: float = 0.0
    gx: object = None
    gy: object = None


def _flux_operator(op, a_rate, mu):
    """Map from weighted flux profiles to the weighted dissipation-norm response."""
    g, n, k, A = op.grid, op.ny, op.k, op.A
    beta = a_rate / math.sqrt(A)
    W = np.sqrt(g.weights)
    div = np.hstack([1j * k * np.eye(n + 1)[1:-1], g.D[1:-1]])
    lhs = op.interior - beta * np.eye(n - 1) + 1j * mu * np.eye(n - 1)
    resp = np.zeros((n + 1, 2 * (n + 1)), dtype=complex)
    resp[1:-1] = la.solve(lhs, div)
    w_in = math.sqrt(A) * np.concatenate([W, W])
    resp = resp / w_in[None, :]
    a0 = math.sqrt(A ** -0.5 + k * k / A)
    a1 = math.sqrt(1.0 / A)
    return np.vstack([a0 * W[:, None] * resp, a1 * W[:, None] * (g.D @ resp)]), w_in


def worst_forcing(op, a_rate):
    """Frequency and flux profiles maximizing the steady time-space ratio."""
    k = op.k
    mus = default_mu_grid(k, width=1.3, count=27, near=30)
    gain = lambda m: float(la.svdvals(_flux_operator(op, a_rate, m)[0])[0] ** 2)
    vals = np.array([gain(m) for m in mus])
    i = int(np.argmax(vals))
    lo, hi = mus[max(i - 1, 0)], mus[min(i + 1, len(mus) - 1)]
    res = optimize.minimize_scalar(lambda m: -gain(m), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    mu = float(res.x) if -res.fun > vals[i] else float(mus[i])
    T, w_in = _flux_operator(op, a_rate, mu)
    _, s, vh = la.svd(T)
    prof = vh[0].conj() / w_in
    n1 = op.ny + 1
    return mu, float(s[0] ** 2), prof[:n1], prof[n1:]


@dataclass
class TimespaceReport:
    A: float
    k: int
    a_rate: float
    R: float
    numerator: float
    denominator: float
    horizon: float
    steps: int
    predicted: float = None
    mu: float = None
    nonlocal_term: bool = False
    warning: str = ""


def _forcing_profile(spec, y):
    if spec is None:
        return np.zeros(y.size, complex)
    return np.asarray(spec(y) if callable(spec) else spec, complex)


def _wnorm_sq(w, f):
    return float(np.sum(w * np.abs(f) ** 2))


def verify_timespace(A, k, forcing=None, a_rate=0.35, f0=None, ny=DEFAULT_NY,
                     nonlocal_term=False, horizon=None, dt=None):
    """Integrate ``(d_t + L) f = div f2`` for one wavenumber and form the ratio

        R = ||f||_{X_a}^2 / (||f(0)||^2 + A ||exp(a t/sqrt(A)) f2||_{L^2 L^2}^2).

    The flux is advanced with an exponential integrator that interpolates
    the forcing linearly over each step.
    """
    forcing = forcing or Forcing()
    op = OSOperator(float(A), int(k), ny, nonlocal_term)
    g, n = op.grid, ny
    w, D = g.weights, g.D
    beta = a_rate / math.sqrt(A)
    horizon = 20.0 * math.sqrt(A) if horizon is None else float(horizon)
    dt = 0.05 if dt is None else float(dt)
    steps = max(1, int(math.ceil(horizon / dt)))
    h = horizon / steps

    warning = ""
    abscissa = float(np.linalg.eigvals(op.weighted).real.min())
    if beta >= abscissa:
        warning = (f"a_rate/sqrt(A) = {beta:.3g} is not below the decay rate {abscissa:.3g}; "
                   "the X_a weight overwhelms the decay")
        warnings.warn(warning, RuntimeWarning, stacklevel=2)

    gx = gy = None
    mu, predicted = forcing.mu, None
    if forcing.kind == "worst":
        mu, predicted, gx, gy = worst_forcing(op, a_rate)
    elif forcing.kind == "profile":
        gx, gy = (_forcing_profile(v, g.y) for v in (forcing.gx, forcing.gy))
    elif forcing.kind != "none":
        raise UsageError(f"unknown forcing kind {forcing.kind!r}")
    if gx is not None:
        gx, gy = forcing.amplitude * gx, forcing.amplitude * gy
        div_g = (1j * op.k * gx + D @ gy)[1:-1]
        g_sq = _wnorm_sq(w, gx) + _wnorm_sq(w, gy)
    else:
        div_g, g_sq = np.zeros(n - 1, complex), 0.0

    f = np.zeros(n - 1, complex) if f0 is None else np.asarray(f0, complex).reshape(-1)
    if f.size == n + 1:
        f = f[1:-1]
    if f.size != n - 1:
        raise UsageError("f0 must be a profile with ny+1 (or ny-1 interior) entries")
    f0_sq = _wnorm_sq(w[1:-1], f)

    E, F1, F2 = _phi_functions(-h * op.interior, 2)
    F1, F2 = h * F1, h * F2
    growth = complex(math.exp(-beta * h)) * np.exp(1j * mu * h)
    acc = XaAccumulator(a_rate, float(A))
    full = np.zeros(n + 1, complex)

    def sample(t, f):
        full[1:-1] = f
        l2 = _wnorm_sq(w, full)
        grad = _wnorm_sq(w, D @ full) + op.k**2 * l2
        return update_xa_values(acc, t, l2, grad)

    acc = sample(0.0, f)
    src = div_g.copy()
    for j in range(steps):
        src_next = src * growth
        f = E @ f + F1 @ src + F2 @ (src_next - src)
        src = src_next
        acc = sample((j + 1) * h, f)
    denom = f0_sq + A * g_sq * horizon
    num = acc.value_sq
    R = 0.0 if denom == 0 and num == 0 else (num / denom if denom > 0 else math.inf)
    return TimespaceReport(float(A), int(k), a_rate, R, num, denom, horizon, steps, predicted,
                           float(mu), nonlocal_term, warning)


# ----------------------------------------------------------------------
# fits, resolution checks and output

@dataclass
class SlopeFit:
    slope: float
    intercept: float
    half_width: float
    residual: float
    n: int


def fit_loglog(xs, ys, confidence=0.95):
    """Least-squares slope of log y against log x with a confidence half-width."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    if lx.size < 2:
        raise UsageError("need at least two points for a slope")
    if lx.size == 2:
        slope = (ly[1] - ly[0]) / (lx[1] - lx[0])
        return SlopeFit(float(slope), float(ly[0] - slope * lx[0]), math.inf, 0.0, 2)
    fit = stats.linregress(lx, ly)
    tq = stats.t.ppf(0.5 + confidence / 2, lx.size - 2)
    resid = ly - (fit.slope * lx + fit.intercept)
    return SlopeFit(float(fit.slope), float(fit.intercept), float(tq * fit.stderr),
                    float(np.sqrt(np.mean(resid**2))), int(lx.size))


def converge_ny(fn, ny=DEFAULT_NY, rtol=0.01, max_ny=512):
    """Double ``ny`` until ``fn(ny)`` changes by less than ``rtol``; returns (value, ny)."""
    prev = fn(ny)
    while 2 * ny <= max_ny:
        cur = fn(2 * ny)
        ny *= 2
        if abs(cur - prev) <= rtol * abs(cur):
            return cur, ny
        prev = cur
    warnings.warn(f"no {rtol:.0%} agreement up to ny={ny}", RuntimeWarning, stacklevel=2)
    return prev, ny


def rows_to_csv(header, rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return out.getvalue()


def to_json(obj):
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if hasattr(o, "__dataclass_fields__"):
            return asdict(o)
        raise TypeError(type(o).__name__)
    return json.dumps(obj, indent=2, sort_keys=True, default=default)
