"""Time integration of the rescaled Keller-Segel-Navier-Stokes system.

Prognostic variables are the two cell densities ``n1, n2``, the vorticity
``omega`` and the mean streamwise velocity profile ``u01``.  With flow
amplitude ``A > 0`` the equations are written in the rescaled time of the
Poiseuille problem (diffusivity ``1/A``, shear speed ``1 - y^2``); ``A = 0``
switches the shear off and runs the unscaled system (unit diffusivity).

Every wavenumber ``k`` is evolved on the interior Chebyshev nodes; wall
values are reconstructed from the boundary conditions so that each new
state satisfies them exactly.  For the Neumann zero mode the interior
residual carries one extra uniform unknown fixed by the discrete mass
balance, which makes cell mass (and the mean momentum) conserved to
round-off.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg as la

from . import diagnostics
from .elliptic import DensityBC, chemo_operator_stack, stream_operator_stack
from .errors import ConfigError, UsageError
from .grid import PhysField, lp_norm

SCHEMES = ("imex_euler", "sbdf2", "etd1", "etdrk2")
COMPLETED = "completed"
BLOW_UP = "blow_up"
INSTABILITY = "numerical_instability"


@dataclass(frozen=True)
class SimParams:
    """Physical and numerical parameters of one run.

    ``A = 0`` means the shear flow is switched off and time is unscaled.
    ``shear='implicit'`` integrates the shear advection and the nonlocal
    vorticity term with the diffusion; ``'explicit'`` moves them to the
    explicit side.
    """

    A: float
    chi1: float = 1.0
    chi2: float = 1.0
    bc: DensityBC = DensityBC.NEUMANN
    a_rate: float = 0.35
    dt: float = 1e-2
    t_end: float = 1.0
    cfl_safety: float = 0.5
    blowup_factor: float = 1e4
    scheme: str = "imex_euler"
    shear: str = "implicit"
    max_halvings: int = 12

    def __post_init__(self):
        object.__setattr__(self, "bc", DensityBC.coerce(self.bc))
        if not (self.A == 0 or self.A >= 1):
            raise ConfigError(f"A must be 0 (shear off) or >= 1, got {self.A}")
        if self.dt <= 0 or self.t_end < 0:
            raise ConfigError("dt must be positive and t_end non-negative")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must lie in (0, 1]")
        if self.blowup_factor <= 1:
            raise ConfigError("blowup_factor must exceed 1")
        if self.a_rate <= 0:
            raise ConfigError("a_rate must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.shear not in ("implicit", "explicit"):
            raise ConfigError(f"unknown shear treatment {self.shear!r}")

    @property
    def nu(self):
        """Diffusivity in the time units of the run."""
        return 1.0 / self.A if self.A > 0 else 1.0

    @property
    def shear_amp(self):
        return 1.0 if self.A > 0 else 0.0

    @property
    def chi(self):
        return (self.chi1, self.chi2)


@dataclass
class SimState:
    t: float
    n1: PhysField
    n2: PhysField
    omega: PhysField
    u01: np.ndarray
    c: PhysField = None
    u1: PhysField = None
    u2: PhysField = None

    @property
    def grid(self):
        return self.n1.grid

    def is_finite(self):
        return (self.n1.is_finite() and self.n2.is_finite() and self.omega.is_finite()
                and bool(np.all(np.isfinite(self.u01))))

    def densities(self):
        return (self.n1, self.n2)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    records: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    termination: str = None
    message: str = ""
    snapshots: list = field(default_factory=list)
    final_state: SimState = None
    initial_max: tuple = (0.0, 0.0)
    steps: int = 0
    dt_final: float = None
    peak: tuple = None

    def terminate(self, kind, message=""):
        if self.termination is not None:
            raise UsageError(f"trajectory already terminated ({self.termination})")
        if kind not in (COMPLETED, BLOW_UP, INSTABILITY):
            raise UsageError(f"unknown termination {kind!r}")
        self.termination = kind
        self.message = message

    def add(self, t, record, energy=None):
        if self.times and t <= self.times[-1]:
            raise UsageError("sample times must increase strictly")
        self.times.append(float(t))
        self.records.append(record)
        self.energy.append(energy)


# ----------------------------------------------------------------------
# initial data

@dataclass(frozen=True)
class Bump:
    """Gaussian bump of one species, periodic in x."""

    species: int
    x0: float = math.pi
    y0: float = 0.0
    width: float = 0.2
    weight: float = 1.0


def _gaussian(grid, x0, y0, width):
    X, Y = grid.mesh()
    out = np.zeros(grid.shape)
    for shift in (-2 * math.pi, 0.0, 2 * math.pi):
        out += np.exp(-((X - x0 - shift) ** 2 + (Y - y0) ** 2) / (2 * width**2))
    return out


def _smooth_noise(grid, rng, kmodes=3, ydeg=4):
    X, Y = grid.mesh()
    out = np.zeros(grid.shape)
    for k in range(kmodes + 1):
        for m in range(ydeg + 1):
            a, b = rng.standard_normal(2)
            out += (a * np.cos(k * X) + b * np.sin(k * X)) * np.cos(m * np.arccos(Y))
    return out / max(np.abs(out).max(), 1e-300)


def apply_bc(grid, values, bc):
    """Overwrite wall values so that the field satisfies the boundary condition."""
    P = _prolongation(grid, DensityBC.coerce(bc))
    return values[:, 1:-1] @ P.T


def make_initial(grid, bumps, masses, bc=DensityBC.NEUMANN, seed=None, noise=0.0,
                 vortex=None, u01_amplitude=0.0):
    """Build a non-negative initial state with prescribed cell masses.

    ``vortex`` is an optional dict with keys ``amplitude, x0, y0, width``
    giving a Gaussian vorticity patch; ``u01_amplitude`` sets the mean
    flow ``u01 = a cos(pi y)``.  Both default to a fluid at rest.
    """
    bc = DensityBC.coerce(bc)
    if len(masses) != 2 or any(m <= 0 for m in masses):
        raise ConfigError(f"both species masses must be positive, got {masses}")
    h = 2.0 * max(grid.dx, math.pi / grid.ny)
    rng = np.random.default_rng(seed)
    dens = []
    for s in (1, 2):
        own = [b for b in bumps if b.species == s]
        if not own:
            raise ConfigError(f"no bump given for species {s}")
        vals = np.zeros(grid.shape)
        for b in own:
            if b.width < h:
                raise ConfigError(f"bump width {b.width} below two grid spacings ({h:.3g})")
            vals += b.weight * _gaussian(grid, b.x0, b.y0, b.width)
        if noise:
            vals *= 1.0 + noise * _smooth_noise(grid, rng)
        vals = np.maximum(apply_bc(grid, np.maximum(vals, 0.0), bc), 0.0)
        mass = lp_norm(PhysField(grid, vals), 1)
        if mass <= 0:
            raise ConfigError(f"species {s} has no mass left after the wall cutoff")
        dens.append(PhysField(grid, vals * (masses[s - 1] / mass)))
    omega = np.zeros(grid.shape)
    if vortex:
        omega = vortex.get("amplitude", 1.0) * _gaussian(
            grid, vortex.get("x0", math.pi), vortex.get("y0", 0.0), vortex.get("width", 0.3))
        omega = apply_bc(grid, omega, DensityBC.DIRICHLET)
    u01 = u01_amplitude * np.cos(np.pi * grid.y)
    return SimState(0.0, dens[0], dens[1], PhysField(grid, omega), u01)


# ----------------------------------------------------------------------
# per-wavenumber operators

@lru_cache(maxsize=16)
def _prolongation(grid, bc):
    """Map interior values to full profiles satisfying the wall condition."""
    n = grid.ny
    P = np.zeros((n + 1, n - 1))
    P[1:n] = np.eye(n - 1)
    if bc is DensityBC.NEUMANN:
        B = grid.D[[0, n], :]
        P[[0, n]] = -np.linalg.solve(B[:, [0, n]], B[:, 1:n])
    P.setflags(write=False)
    return P


@lru_cache(maxsize=16)
def _restriction(grid, bc, conservative):
    """Interior rows of a full residual; optionally mass-consistent."""
    n = grid.ny
    R = np.zeros((n - 1, n + 1))
    R[:, 1:n] = np.eye(n - 1)
    if conservative:
        w = grid.weights
        P = _prolongation(grid, bc)
        defect = w - (w @ P) @ R
        R = R + np.outer(np.ones(n - 1), defect) / (w @ P).sum()
    R.setflags(write=False)
    return R


def _phi_functions(Z, order=2):
    """exp(Z), phi1(Z) and, for ``order=2``, phi2(Z) from one augmented exponential."""
    m = Z.shape[0]
    blocks = order + 1
    big = np.zeros((blocks * m, blocks * m), dtype=complex)
    big[:m, :m] = Z
    for b in range(1, blocks):
        big[(b - 1) * m:b * m, b * m:(b + 1) * m] = np.eye(m)
    ex = la.expm(big)
    return tuple(ex[:m, b * m:(b + 1) * m] for b in range(blocks))


class _Family:
    """Linear part of one prognostic equation, one matrix per wavenumber."""

    def __init__(self, grid, kind, bc, A, shear, kmax):
        self.grid = grid
        self.kind = kind
        self.bc = bc
        self.kmax = kmax
        n = grid.ny
        nu = 1.0 / A if A > 0 else 1.0
        S = 1.0 if A > 0 else 0.0
        implicit_shear = shear == "implicit"
        ks = range(kmax + 1)
        profile = np.diag(1.0 - grid.y**2)
        stream = stream_operator_stack(grid, kmax) if kind == "vorticity" else None
        L = np.zeros((kmax + 1, n + 1, n + 1), dtype=complex)
        for k in ks:
            L[k] = nu * (k * k * np.eye(n + 1) - grid.D2)
            if implicit_shear and k:
                L[k] += 1j * k * S * profile
                if kind == "vorticity":
                    L[k] += 2j * k * S * stream[k]
        self.L = L
        self.P = _prolongation(grid, bc)
        self.R = [_restriction(grid, bc, k == 0 and bc is DensityBC.NEUMANN) for k in ks]
        self.Lred = np.stack([self.R[k] @ L[k] @ self.P for k in ks])
        self._cache = {}

    def _lift(self, mats):
        return np.stack([self.P @ mats[k] @ self.R[k] for k in range(self.kmax + 1)])

    def implicit(self, dt, c0):
        key = ("imp", dt, c0)
        if key not in self._cache:
            m = self.Lred.shape[1]
            inv = np.stack([np.linalg.inv(c0 * np.eye(m) + dt * Lk) for Lk in self.Lred])
            self._cache[key] = self._lift(inv)
        return self._cache[key]

    def exponential(self, dt, order=2):
        """Lifted ``exp(-dt L)``, ``dt phi1`` and (order 2) ``dt phi2`` stacks."""
        key = ("exp", dt, order)
        if key not in self._cache:
            parts = [_phi_functions(-dt * Lk, order) for Lk in self.Lred]
            stacks = [self._lift([pk[0] for pk in parts])]
            for b in range(1, order + 1):
                stacks.append(self._lift([dt * pk[b] for pk in parts]))
            if order == 1:
                stacks.append(None)
            self._cache[key] = tuple(stacks)
        return self._cache[key]

    def apply_L(self, coeffs):
        return np.einsum("kij,kj->ki", self.L, coeffs)


@lru_cache(maxsize=16)
def _family(grid, kind, bc, A, shear, kmax):
    return _Family(grid, kind, bc, A, shear, kmax)


def _mv(stack, v):
    return np.einsum("kij,kj->ki", stack, v)


class Stepper:
    """Integrator bound to one grid and parameter set; caches operators."""

    def __init__(self, grid, params):
        self.grid = grid
        self.p = params
        self.kmax = grid.kmax
        kmax = self.kmax
        self.ks = np.arange(kmax + 1)
        self.ik = 1j * self.ks[:, None]
        A, shear = float(params.A), params.shear
        self.dens = _family(grid, "density", params.bc, A, shear, kmax)
        self.vort = _family(grid, "vorticity", DensityBC.DIRICHLET, A, shear, kmax)
        self.mean = _family(grid, "mean", DensityBC.NEUMANN, A, shear, 0)
        self.chemo = chemo_operator_stack(grid, params.bc, kmax)
        self.stream = stream_operator_stack(grid, kmax)
        self.profile = 1.0 - grid.y**2
        self._history = None

    # -- transforms restricted to the retained wavenumbers
    def fwd(self, values):
        return self.grid.forward(values)[: self.kmax + 1]

    def back(self, coeffs):
        g = self.grid
        full = np.zeros((g.nx // 2 + 1, g.ny + 1), dtype=complex)
        full[: self.kmax + 1] = coeffs
        return g.backward(full)

    def pack(self, state):
        u0 = np.zeros((1, self.grid.ny + 1), dtype=complex)
        u0[0] = state.u01
        return [self.fwd(state.n1.values), self.fwd(state.n2.values),
                self.fwd(state.omega.values), u0]

    def unpack(self, t, v, with_derived=True):
        g = self.grid
        st = SimState(t, PhysField(g, self.back(v[0])), PhysField(g, self.back(v[1])),
                      PhysField(g, self.back(v[2])), v[3][0].real.copy())
        if with_derived:
            self.attach_derived(st, v)
        return st

    def attach_derived(self, st, v=None):
        v = self.pack(st) if v is None else v
        g = self.grid
        ch = _mv(self.chemo, v[0] + v[1])
        phi = _mv(self.stream, v[2])
        st.c = PhysField(g, self.back(ch))
        st.u1 = PhysField(g, self.back(phi @ g.D.T) + v[3][0].real[None, :])
        st.u2 = PhysField(g, self.back(-self.ik * phi))
        return st

    # -- explicit terms
    def nonlinear(self, v):
        """Explicit tendencies and the data needed for step control."""
        g, p = self.grid, self.p
        nu, S = p.nu, p.shear_amp
        D = g.D
        n1h, n2h, wh, u0h = v
        ik = self.ik
        ch = _mv(self.chemo, n1h + n2h)
        phi = _mv(self.stream, wh)
        cx, cy = self.back(ik * ch), self.back(ch @ D.T)
        u0 = u0h[0].real
        u1n = self.back(phi @ D.T)
        u1 = u1n + u0[None, :]
        u2 = self.back(-ik * phi)
        n1, n2, w = self.back(n1h), self.back(n2h), self.back(wh)

        out = []
        vx_max = vy_max = 0.0
        for dens, chi in ((n1, p.chi1), (n2, p.chi2)):
            Vx = nu * (chi * cx + u1)
            Vy = nu * (chi * cy + u2)
            Fx, Fy = self.fwd(dens * Vx), self.fwd(dens * Vy)
            out.append(-(ik * Fx + Fy @ D.T))
            vx_max = max(vx_max, np.abs(Vx).max())
            vy_max = max(vy_max, np.abs(Vy / g.dy_local).max())
        Gx, Gy = self.fwd(w * u1), self.fwd(w * u2)
        out.append(-nu * (ik * (n1h + n2h) + ik * Gx + Gy @ D.T))
        flux0 = self.fwd(u2 * u1n)[0]
        out.append((-nu * (D @ flux0))[None, :])
        vx_max = max(vx_max, nu * np.abs(u1).max())
        vy_max = max(vy_max, nu * np.abs(u2 / g.dy_local).max())

        if p.shear == "explicit" and S:
            prof = self.profile[None, :]
            out[0] = out[0] - S * ik * prof * n1h
            out[1] = out[1] - S * ik * prof * n2h
            out[2] = out[2] - S * ik * prof * wh - 2.0 * S * ik * phi
            vx_max += S
        info = {
            "cfl_rate": vx_max / g.dx + vy_max,
            "nmax": (float(np.abs(n1).max()), float(np.abs(n2).max())),
            "finite": bool(np.isfinite(n1).all() and np.isfinite(n2).all()
                           and np.isfinite(w).all() and np.all(np.isfinite(u0))),
        }
        return out, info

    def families(self):
        return (self.dens, self.dens, self.vort, self.mean)

    def tendency(self, v):
        """Full right-hand side ``-L v + N(v)`` at every node."""
        N, _ = self.nonlinear(v)
        return [Nk - fam.apply_L(vk) for Nk, fam, vk in zip(N, self.families(), v)]

    # -- one step
    def reset(self):
        self._history = None

    def advance(self, v, dt, N=None):
        """Advance packed spectral state by ``dt``; returns the new packed state."""
        if N is None:
            N, _ = self.nonlinear(v)
        scheme = self.p.scheme
        fams = self.families()
        if scheme == "sbdf2" and self._history is not None and self._history[0] == dt:
            _, v_old, N_old = self._history
            new = [_mv(f.implicit(dt, 1.5), 2 * x - 0.5 * xo + dt * (2 * n - no))
                   for f, x, xo, n, no in zip(fams, v, v_old, N, N_old)]
        elif scheme in ("imex_euler", "sbdf2"):
            new = [_mv(f.implicit(dt, 1.0), x + dt * n) for f, x, n in zip(fams, v, N)]
        else:
            ops = [f.exponential(dt, 2 if scheme == "etdrk2" else 1) for f in fams]
            new = [_mv(E, x) + _mv(F1, n) for (E, F1, _), x, n in zip(ops, v, N)]
            if scheme == "etdrk2":
                Na, _ = self.nonlinear(new)
                new = [a + _mv(F2, na - n) for a, (_, _, F2), na, n in zip(new, ops, Na, N)]
        self._history = (dt, v, N) if scheme == "sbdf2" else None
        new[3] = new[3].real.astype(complex)
        return new


def step(s, p):
    """One step of size ``p.dt`` (first-order start for multistep schemes)."""
    st = Stepper(s.grid, p)
    v = st.advance(st.pack(s), p.dt)
    return st.unpack(s.t + p.dt, v)


def tendency(s, p):
    """Time derivatives ``(n1, n2, omega, u01)`` of a frozen state."""
    st = Stepper(s.grid, p)
    dv = st.tendency(st.pack(s))
    g = s.grid
    return (PhysField(g, st.back(dv[0])), PhysField(g, st.back(dv[1])),
            PhysField(g, st.back(dv[2])), dv[3][0].real.copy())


def run(s0, p, sample_every=None, snapshot_every=None, stepper=None):
    """Integrate from ``s0`` to ``p.t_end`` and record diagnostics."""
    grid = s0.grid
    st = stepper or Stepper(grid, p)
    st.reset()
    traj = Trajectory()
    if not sample_every or sample_every <= 0:
        sample_every = p.t_end if p.t_end > 0 else 1.0
    if not s0.is_finite():
        traj.final_state = s0
        traj.terminate(INSTABILITY, "non-finite initial data")
        return traj

    init_max = tuple(lp_norm(n, "inf") for n in s0.densities())
    traj.initial_max = init_max
    acc = diagnostics.EnergyTracker(p.A, p.a_rate) if p.A > 0 else None

    n_steps = max(1, math.ceil(p.t_end / p.dt - 1e-9)) if p.t_end > 0 else 0
    dt_cfg = p.t_end / n_steps if n_steps else p.dt
    dt = dt_cfg
    t = float(s0.t)
    t_stop = t + p.t_end
    v = st.pack(s0)
    t_start = t
    next_sample = t
    snap_count = 0
    halvings = 0

    def sample(v, t):
        nonlocal snap_count
        state = st.unpack(t, v)
        rec = diagnostics.make_record(state, p)
        energy = None
        if acc is not None:
            acc.update_spectral(t, st, v)
            energy = acc.energy()
        traj.add(t, rec, energy)
        if snapshot_every and snap_count % snapshot_every == 0:
            traj.snapshots.append(state)
        snap_count += 1
        return state

    state = None
    while True:
        N, info = st.nonlinear(v)
        if not info["finite"]:
            traj.terminate(INSTABILITY, f"non-finite state at t={t:.6g}")
            break
        traj.peak = tuple(max(a, b) for a, b in zip(traj.peak or (0.0, 0.0), info["nmax"]))
        ratios = [m / max(i, 1.0) for m, i in zip(info["nmax"], init_max)]
        blown = max(ratios) >= p.blowup_factor
        at_end = t >= t_stop - 1e-9 * max(dt_cfg, 1e-300)
        if at_end or blown or t >= next_sample - 1e-9 * dt_cfg:
            state = sample(v, t)
            done = math.floor((t - t_start) / sample_every + 1e-9)
            next_sample = t_start + (done + 1) * sample_every
        elif acc is not None:
            acc.update_spectral(t, st, v)
        if blown:
            traj.terminate(BLOW_UP, f"density grew {max(ratios):.3g}x by t={t:.6g}")
            break
        if at_end:
            traj.terminate(COMPLETED)
            break
        # step-size control
        while dt * info["cfl_rate"] > p.cfl_safety:
            dt *= 0.5
            halvings += 1
            st.reset()
        if halvings > p.max_halvings:
            traj.terminate(INSTABILITY, f"time step collapsed below {dt:.3g} at t={t:.6g}")
            break
        if dt < dt_cfg and 4 * dt * info["cfl_rate"] < p.cfl_safety:
            k2 = (t_stop - t) / (2 * dt)
            if abs(k2 - round(k2)) < 1e-6:
                dt *= 2.0
                halvings -= 1
                st.reset()
        h = min(dt, t_stop - t)
        if abs(h - dt) < 1e-9 * dt:
            h = dt
        v = st.advance(v, h, N)
        t = t_stop if abs(t_stop - (t + h)) < 1e-9 * dt else t + h
        traj.steps += 1

    traj.final_state = state if state is not None and state.t == t else st.unpack(t, v)
    traj.dt_final = dt
    return traj


def with_derived(s, p):
    """Return ``s`` with ``c``, ``u1``, ``u2`` recomputed."""
    st = Stepper(s.grid, p)
    return st.attach_derived(replace(s))


def split_tendency(s, p):
    """Right-hand sides of the x-independent and x-dependent subsystems.

    Each bilinear term is assembled separately from the zero and non-zero
    parts of the state (for example ``div(n_ne grad c_ne)`` split into its
    own zero and non-zero modes), so summing the two subsystems
    reproduces ``tendency`` only if the decomposition is complete.
    Returns a dict with keys ``n1_0, n1_ne, n2_0, n2_ne, omega_0,
    omega_ne, u01``, each a ``PhysField`` (``u01`` a profile).
    """
    st = Stepper(s.grid, p)
    g, D, ik = s.grid, s.grid.D, st.ik
    nu, S = p.nu, p.shear_amp
    prof = st.profile[None, :]
    back, fwd = st.back, st.fwd

    def modes(c):
        zero = np.zeros_like(c)
        zero[0] = c[0]
        return zero, c - zero

    def div(fx, fy):
        return ik * fwd(fx) + fwd(fy) @ D.T

    def dx(fx):
        return ik * fwd(fx)

    def dy(fy):
        return fwd(fy) @ D.T

    n1h, n2h, wh, u0h = st.pack(s)
    w0, wn = modes(wh)
    c0, cn = modes(_mv(st.chemo, n1h + n2h))
    phin = _mv(st.stream, wn)
    u1n, u2n = back(phin @ D.T), back(-ik * phin)
    u01 = u0h[0].real[None, :]
    dyc0 = back(c0 @ D.T)
    cnx, cny = back(ik * cn), back(cn @ D.T)

    out = {}
    for name, nh, chi in (("n1", n1h, p.chi1), ("n2", n2h, p.chi2)):
        n0h, nnh = modes(nh)
        n0, nn = back(n0h), back(nnh)
        chem_nn0, chem_nnn = modes(div(nn * cnx, nn * cny))
        adv_nn0, adv_nnn = modes(div(u1n * nn, u2n * nn))
        zero = (nu * (n0h @ D.T @ D.T) - nu * chi * (chem_nn0 + dy(n0 * dyc0))
                - nu * adv_nn0)
        nonzero = (-S * ik * prof * nnh + nu * (-(ik.imag**2) * nnh + nnh @ D.T @ D.T)
                   - nu * chi * (chem_nnn + div(n0 * cnx, n0 * cny) + dy(nn * dyc0))
                   - nu * (adv_nnn + dx(u01 * nn) + div(u1n * n0, u2n * n0)))
        out[f"{name}_0"], out[f"{name}_ne"] = zero, nonzero

    w0p, wnp = back(w0), back(wn)
    adv0, advn = modes(div(u1n * wnp, u2n * wnp))
    _, nnsum = modes(n1h + n2h)
    out["omega_0"] = nu * (w0 @ D.T @ D.T) - nu * adv0
    out["omega_ne"] = (-S * ik * prof * wn + nu * (-(ik.imag**2) * wn + wn @ D.T @ D.T)
                       - 2.0 * S * ik * phin
                       - nu * (advn + dx(u01 * wnp) + div(u1n * w0p, u2n * w0p))
                       - nu * ik * nnsum)
    flux0 = fwd(u2n * u1n)[0]
    u01_rate = nu * (D @ D @ u0h[0]) - nu * (D @ flux0)

    result = {key: PhysField(g, back(val)) for key, val in out.items()}
    result["u01"] = u01_rate.real.copy()
    return result
