"""Norm bookkeeping along trajectories and checks of the a priori estimates."""

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

from .elliptic import DensityBC, solve_chemo, stream_solve
from .errors import UsageError
from .grid import (PhysField, ddx, ddy, lp_norm, project_nonzero, project_zero)

BOUNDED = "bounded"
BLOW_UP_FLAGGED = "blow_up_flagged"
INCONCLUSIVE = "inconclusive"


@dataclass
class DiagRecord:
    t: float
    n1_zero_l2: float
    n1_nonzero_l2: float
    n1_max: float
    n1_min: float
    n2_zero_l2: float
    n2_nonzero_l2: float
    n2_max: float
    n2_min: float
    omega_zero_l2: float
    omega_nonzero_l2: float
    dy_omega_zero_l2: float
    u01_max: float
    u01_l2: float
    M1: float
    M2: float
    grad_c_l4: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [getattr(self, name) for name in self.columns()]


def integral(f):
    g = f.grid
    return float(g.dx * np.sum(f.values @ g.weights))


def make_record(state, params):
    """Diagnostics of one state; ``c`` is recomputed if absent."""
    g = state.grid
    c = state.c if state.c is not None else solve_chemo(state.n1 + state.n2, params.bc)
    grad_c = PhysField(g, np.sqrt(ddx(c).values ** 2 + ddy(c).values ** 2))
    w0 = project_zero(state.omega)
    u01 = PhysField(g, np.broadcast_to(state.u01, g.shape))
    vals = {"t": float(state.t)}
    for name, n in (("n1", state.n1), ("n2", state.n2)):
        vals[f"{name}_zero_l2"] = lp_norm(project_zero(n), 2)
        vals[f"{name}_nonzero_l2"] = lp_norm(project_nonzero(n), 2)
        vals[f"{name}_max"] = lp_norm(n, "inf")
        vals[f"{name}_min"] = float(n.values.min())
    vals.update(
        omega_zero_l2=lp_norm(w0, 2),
        omega_nonzero_l2=lp_norm(project_nonzero(state.omega), 2),
        dy_omega_zero_l2=lp_norm(ddy(w0), 2),
        u01_max=float(np.abs(state.u01).max()),
        u01_l2=lp_norm(u01, 2),
        M1=integral(state.n1),
        M2=integral(state.n2),
        grad_c_l4=lp_norm(grad_c, 4),
    )
    return DiagRecord(**vals)


# ----------------------------------------------------------------------
# X_a norms and the energy functional

@dataclass(frozen=True)
class XaAccumulator:
    """Running pieces of the time-weighted norm.

    ``sup_piece`` is the running sup of ``exp(2 a t / sqrt(A)) ||f||^2``;
    ``int_piece`` and ``grad_piece`` are trapezoid integrals of the same
    weight times ``||f||^2`` and ``||grad f||^2``.
    """

    a_rate: float
    A: float
    t_last: float = None
    last_l2: float = 0.0
    last_grad: float = 0.0
    sup_piece: float = 0.0
    int_piece: float = 0.0
    grad_piece: float = 0.0

    @property
    def beta(self):
        return self.a_rate / math.sqrt(self.A)

    @property
    def value_sq(self):
        return (self.sup_piece + self.int_piece / math.sqrt(self.A)
                + self.grad_piece / self.A)

    @property
    def value(self):
        return math.sqrt(self.value_sq)


def update_xa_values(acc, t, l2_sq, grad_sq):
    """Advance with squared norms ``||f||^2`` and ``||grad f||^2`` at time ``t``."""
    if acc.t_last is not None and t < acc.t_last:
        raise UsageError(f"X_a update went back in time ({t} < {acc.t_last})")
    weight = math.exp(2.0 * acc.beta * t)
    wl2, wgrad = weight * l2_sq, weight * grad_sq
    sup_piece = max(acc.sup_piece, wl2)
    int_piece, grad_piece = acc.int_piece, acc.grad_piece
    if acc.t_last is not None:
        h = t - acc.t_last
        int_piece += 0.5 * h * (acc.last_l2 + wl2)
        grad_piece += 0.5 * h * (acc.last_grad + wgrad)
    return replace(acc, t_last=float(t), last_l2=wl2, last_grad=wgrad,
                   sup_piece=sup_piece, int_piece=int_piece, grad_piece=grad_piece)


def update_xa(acc, t, f):
    """Advance the accumulator with field ``f`` sampled at time ``t``."""
    grad_sq = lp_norm(ddx(f), 2) ** 2 + lp_norm(ddy(f), 2) ** 2
    return update_xa_values(acc, t, lp_norm(f, 2) ** 2, grad_sq)


def energy_E(acc_n1, acc_n2, acc_omega):
    """Sum of the three X_a norms of the non-zero modes."""
    accs = (acc_n1, acc_n2, acc_omega)
    ref = (acc_n1.a_rate, acc_n1.A, acc_n1.t_last)
    for acc in accs[1:]:
        if (acc.a_rate, acc.A, acc.t_last) != ref:
            raise UsageError("energy accumulators disagree on a_rate, A or sample time")
    return sum(acc.value for acc in accs)


def spectral_norms_nonzero(grid, coeffs):
    """``||f_ne||^2`` and ``||grad f_ne||^2`` from retained half-spectrum coefficients."""
    ks = np.arange(coeffs.shape[0])[1:, None]
    c = coeffs[1:]
    l2 = (np.abs(c) ** 2) @ grid.weights
    dy = (np.abs(c @ grid.D.T) ** 2) @ grid.weights
    scale = 4.0 * math.pi
    return (scale * float(l2.sum()),
            scale * float(((ks[:, 0] ** 2) * l2 + dy).sum()))


class EnergyTracker:
    """X_a accumulators for n1_ne, n2_ne and omega_ne fed from spectral states."""

    def __init__(self, A, a_rate):
        self.accs = [XaAccumulator(a_rate, A) for _ in range(3)]

    def update_spectral(self, t, stepper, v):
        if self.accs[0].t_last is not None and t <= self.accs[0].t_last:
            return
        g = stepper.grid
        self.accs = [update_xa_values(acc, t, *spectral_norms_nonzero(g, coeffs))
                     for acc, coeffs in zip(self.accs, v[:3])]

    def energy(self):
        return energy_E(*self.accs)


# ----------------------------------------------------------------------
# inequality verification

@dataclass
class InequalityEntry:
    name: str
    lhs: float
    rhs: float
    theorem: bool
    constant: float = None

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def holds(self):
        tol = 1e-10 * max(abs(self.lhs), abs(self.rhs), 1e-300)
        return self.lhs <= self.rhs + tol if self.theorem else True


@dataclass
class InequalityReport:
    entries: list = field(default_factory=list)

    def add(self, name, lhs, rhs, theorem, constant=None):
        self.entries.append(InequalityEntry(name, float(lhs), float(rhs), theorem, constant))

    def violations(self):
        return [e for e in self.entries if e.theorem and not e.holds]

    def by_name(self):
        return {e.name: e for e in self.entries}

    def to_dict(self):
        return {
            "entries": [dict(asdict(e), slack=e.slack, holds=e.holds) for e in self.entries],
            "violations": [e.name for e in self.violations()],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _ratio(lhs, base):
    return lhs / base if base > 0 else 0.0


def verify_inequalities(state, bc=DensityBC.NEUMANN, flip_poincare=False):
    """Evaluate the elliptic, Poincare and velocity estimates on one state.

    ``flip_poincare`` swaps the operands of the x-Poincare inequality; it
    exists only to exercise the failure path.
    """
    g = state.grid
    c = solve_chemo(state.n1 + state.n2, bc)
    rep = InequalityReport()

    c0 = project_zero(c)
    n0_sum = lp_norm(project_zero(state.n1), 2) + lp_norm(project_zero(state.n2), 2)
    dc0 = ddy(c0)
    rep.add("zero_mode_elliptic_l2", lp_norm(ddy(dc0), 2) + lp_norm(dc0, 2), 2 * n0_sum, True)
    rep.add("zero_mode_elliptic_linf", lp_norm(dc0, "inf"), 2 * n0_sum, True)
    l4 = lp_norm(dc0, 4)
    rep.add("zero_mode_elliptic_l4", l4, l4, False, _ratio(l4, n0_sum))

    cn = project_nonzero(c)
    nn_sum = lp_norm(project_nonzero(state.n1), 2) + lp_norm(project_nonzero(state.n2), 2)
    cx, cy = ddx(cn), ddy(cn)
    hess = math.sqrt(lp_norm(ddx(cx), 2) ** 2 + 2 * lp_norm(ddy(cx), 2) ** 2
                     + lp_norm(ddy(cy), 2) ** 2)
    grad = math.sqrt(lp_norm(cx, 2) ** 2 + lp_norm(cy, 2) ** 2)
    rep.add("nonzero_mode_elliptic_l2", hess + grad, 2 * nn_sum, True)
    grad_l4 = lp_norm(PhysField(g, np.sqrt(cx.values**2 + cy.values**2)), 4)
    rep.add("nonzero_mode_elliptic_l4", grad_l4, grad_l4, False, _ratio(grad_l4, nn_sum))

    for name, f in (("n1", state.n1), ("n2", state.n2), ("omega", state.omega)):
        fn = project_nonzero(f)
        a, b = lp_norm(fn, 2), lp_norm(ddx(fn), 2)
        if flip_poincare:
            a, b = b, a
        rep.add(f"poincare_x_{name}", a, b, True)

    wn = project_nonzero(state.omega)
    s = stream_solve(wn)
    u1, u2 = s.velocity
    u_l2 = math.sqrt(lp_norm(u1, 2) ** 2 + lp_norm(u2, 2) ** 2)
    w_l2 = lp_norm(wn, 2)
    rep.add("velocity_l2", u_l2, w_l2, True)
    grad_u = math.sqrt(sum(lp_norm(op(u), 2) ** 2 for op in (ddx, ddy) for u in (u1, u2)))
    rep.add("velocity_gradient_l2", grad_u, grad_u, False, _ratio(grad_u, w_l2))
    u_inf = max(lp_norm(u1, "inf"), lp_norm(u2, "inf"))
    interp = lp_norm(ddx(wn), 2) ** 0.2 * w_l2 ** 0.8
    rep.add("velocity_linf_interp", u_inf, u_inf, False, _ratio(u_inf, interp))
    return rep


def random_state(grid, rng, bc=DensityBC.NEUMANN, kmax=4, mmax=6, scale=1.0):
    """Smooth, band-limited random state with non-negative densities.

    Wall-compatible by construction: cosine modes in ``pi (y+1)/2`` for
    Neumann data, a ``1 - y^2`` factor for Dirichlet data, sine modes for
    the vorticity.
    """
    from .dynamics import SimState

    bc = DensityBC.coerce(bc)
    X, Y = grid.mesh()
    theta = 0.5 * np.pi * (Y + 1.0)

    def series(basis):
        out = np.zeros(grid.shape)
        for k in range(kmax + 1):
            for m in range(mmax + 1):
                a, b = rng.standard_normal(2) / (1.0 + k + m)
                out += (a * np.cos(k * X) + b * np.sin(k * X)) * basis(m)
        return out

    dens = []
    for _ in range(2):
        s = series(lambda m: np.cos(m * theta))
        s = s - s.min() + rng.uniform(0.0, 0.5)
        if bc is DensityBC.DIRICHLET:
            s = s * (1.0 - Y**2)
        dens.append(PhysField(grid, scale * s))
    omega = scale * series(lambda m: np.sin((m + 1) * theta))
    u01 = scale * sum(rng.standard_normal() * np.cos(m * 0.5 * np.pi * (grid.y + 1.0))
                      for m in range(mmax + 1))
    return SimState(0.0, dens[0], dens[1], PhysField(grid, omega), np.asarray(u01, float))


# ----------------------------------------------------------------------
# trajectory summaries

class ZeroModeReport(NamedTuple):
    T1: float
    T2: float
    T3: float
    predictors: tuple


def _trapezoid(ts, ys):
    ts, ys = np.asarray(ts, float), np.asarray(ys, float)
    if ts.size < 2:
        return 0.0
    return float(np.sum(0.5 * np.diff(ts) * (ys[1:] + ys[:-1])))


def zero_mode_report(traj, chi=(1.0, 1.0), A=None):
    """Empirical zero-mode quantities and their initial-data predictors.

    T1: sup of ||n1_0||^2 + ||n2_0||^2;
    T2: sup ||omega_0|| + A^{-1/2} (int ||d_y omega_0||^2 dt)^{1/2};
    T3: sup ||u01||_inf.
    Predictors follow the structure of the bounds with unit constants.
    """
    recs = traj.records
    if not recs:
        return ZeroModeReport(0.0, 0.0, 0.0, (0.0, 0.0, 0.0))
    ts = [r.t for r in recs]
    t1 = max(r.n1_zero_l2**2 + r.n2_zero_l2**2 for r in recs)
    weight = 1.0 / math.sqrt(A) if A else 1.0
    t2 = max(r.omega_zero_l2 for r in recs) + weight * math.sqrt(
        _trapezoid(ts, [r.dy_omega_zero_l2**2 for r in recs]))
    t3 = max(r.u01_max for r in recs)
    r0 = recs[0]
    chi_sq = max(chi[0] ** 2, chi[1] ** 2, 1.0)
    p1 = chi_sq * (r0.n1_zero_l2**2 + r0.n2_zero_l2**2 + r0.M1**4 + r0.M2**4 + 1.0)
    p2 = r0.omega_zero_l2 + 1.0
    p3 = r0.u01_l2 + r0.omega_zero_l2 + 1.0
    return ZeroModeReport(t1, t2, t3, (p1, p2, p3))


def classify(traj, factor=2.0):
    """Desk-scale verdict: bounded, blow_up_flagged or inconclusive."""
    if traj.termination == "blow_up":
        return BLOW_UP_FLAGGED
    if traj.termination != "completed":
        return INCONCLUSIVE
    peaks = getattr(traj, "peak", None) or tuple(
        max((getattr(r, f"n{s}_max") for r in traj.records), default=0.0) for s in (1, 2))
    for peak, init in zip(peaks, traj.initial_max):
        if peak > factor * init:
            return INCONCLUSIVE
    return BOUNDED
