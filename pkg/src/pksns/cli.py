"""Command-line harness: ``pksns <verb> --config FILE [--out DIR] [--threads N] [--seed S]``.

Verbs: simulate, sweep, bisect, resolvent, decay, timespace, verify.
Every run directory ends with ``manifest.json`` listing each emitted file
with its SHA-256 checksum.  Exit codes: 0 for completed runs (a flagged
blow-up is a finding, not a failure), 1 for a violated theorem-constant
inequality or an invalid bisection bracket, 2 for configuration and
usage errors, 3 for infrastructure failures.
"""

import argparse
import hashlib
import math
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diagnostics, dynamics, linanalysis
from .checkpoint import save_checkpoint
from .config import load_config
from .diagnostics import BOUNDED, DiagRecord
from .errors import BracketError, ConfigError, PKSNSError, UsageError
from .fieldio import write_field
from .grid import ChannelGrid
from .linanalysis import rows_to_csv, to_json
from .parallel import parallel_map

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2, 3


# ----------------------------------------------------------------------
# output helpers

def write_text(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(path, obj):
    write_text(path, to_json(obj) + "\n")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir, command):
    entries = []
    for root, _, files in os.walk(outdir):
        for name in files:
            rel = os.path.relpath(os.path.join(root, name), outdir).replace(os.sep, "/")
            if rel != "manifest.json":
                entries.append(rel)
    entries.sort()
    manifest = {
        "command": command,
        "files": [{"path": rel, "sha256": sha256(os.path.join(outdir, rel)),
                   "bytes": os.path.getsize(os.path.join(outdir, rel))} for rel in entries],
    }
    write_json(os.path.join(outdir, "manifest.json"), manifest)
    return manifest


def records_csv(traj):
    cols = DiagRecord.columns() + ["energy"]
    rows = []
    for rec, energy in zip(traj.records, traj.energy):
        rows.append(rec.row() + [math.nan if energy is None else float(energy)])
    return rows_to_csv(cols, [[float(v) for v in r] for r in rows])


def config_echo(cfg):
    out = cfg.as_dict()
    out["initial"]["bumps"] = [asdict(b) for b in cfg.initial["bumps"]]
    return out


# ----------------------------------------------------------------------
# simulation

def build_grid(cfg):
    g = cfg.grid
    return ChannelGrid(g["nx"], g["ny"], g["dealias"])


def build_initial(cfg, grid, masses=None):
    ini = cfg.initial
    vortex = None
    if ini["vortex_amplitude"]:
        vortex = {"amplitude": ini["vortex_amplitude"], "x0": ini["vortex_x0"],
                  "y0": ini["vortex_y0"], "width": ini["vortex_width"]}
    return dynamics.make_initial(grid, ini["bumps"], masses or ini["masses"], cfg.params["bc"],
                                 seed=ini["seed"], noise=ini["noise"], vortex=vortex,
                                 u01_amplitude=ini["u01_amplitude"])


def _sample_every(cfg, params):
    se = cfg.output["sample_every"]
    if se <= 0:
        return params.t_end / 20.0 if params.t_end > 0 else 1.0
    return se * params.A if cfg.params["physical_time"] and params.A > 0 else se


def run_summary(traj, params):
    recs = traj.records
    first, last = recs[0], recs[-1]
    zm = diagnostics.zero_mode_report(traj, params.chi, params.A or None)
    return {
        "termination": traj.termination,
        "message": traj.message,
        "classification": diagnostics.classify(traj),
        "steps": traj.steps,
        "samples": len(recs),
        "t_final": traj.final_state.t,
        "dt_final": traj.dt_final,
        "initial_max": list(traj.initial_max),
        "peak": list(traj.peak or traj.initial_max),
        "min_density": min(min(r.n1_min, r.n2_min) for r in recs),
        "mass_initial": [first.M1, first.M2],
        "mass_final": [last.M1, last.M2],
        "energy_final": traj.energy[-1],
        "zero_mode": {"T1": zm.T1, "T2": zm.T2, "T3": zm.T3, "predictors": list(zm.predictors)},
        "params": {**asdict(params), "bc": params.bc.value},
    }


def simulate(cfg, **param_changes):
    """One configured run; returns ``(trajectory, params)``."""
    grid = build_grid(cfg)
    masses = param_changes.pop("masses", None)
    params = cfg.sim_params(**param_changes)
    s0 = build_initial(cfg, grid, masses)
    snap = cfg.output["snapshot_every"] or None
    traj = dynamics.run(s0, params, sample_every=_sample_every(cfg, params), snapshot_every=snap)
    return traj, params


def cmd_simulate(cfg, outdir):
    traj, params = simulate(cfg)
    write_text(os.path.join(outdir, "diagnostics.csv"), records_csv(traj))
    summary = run_summary(traj, params)
    summary["config"] = config_echo(cfg)
    write_json(os.path.join(outdir, "summary.json"), summary)
    fmt = cfg.output["field_format"]
    if traj.snapshots:
        os.makedirs(os.path.join(outdir, "snapshots"), exist_ok=True)
    for i, st in enumerate(traj.snapshots):
        for name in ("n1", "n2", "omega"):
            write_field(getattr(st, name), os.path.join(outdir, "snapshots", f"{i:04d}_{name}.{fmt}"), fmt)
    if cfg.output["checkpoint"]:
        save_checkpoint(traj.final_state, params, os.path.join(outdir, "checkpoint"),
                        traj.termination, fmt)
    write_manifest(outdir, "simulate")
    return EXIT_OK


# ----------------------------------------------------------------------
# sweeps and bisection

def _cell_changes(cfg, key, value):
    if key == "mass1":
        return {"masses": [value, cfg.initial["masses"][1]]}
    if key == "mass2":
        return {"masses": [cfg.initial["masses"][0], value]}
    return {key: value}


def _sweep_cell(task):
    cfg, key, value = task
    try:
        traj, params = simulate(cfg, **_cell_changes(cfg, key, value))
        s = run_summary(traj, params)
        return {"value": value, "classification": s["classification"],
                "termination": s["termination"], "steps": s["steps"], "t_final": s["t_final"],
                "peak_ratio1": s["peak"][0] / s["initial_max"][0],
                "peak_ratio2": s["peak"][1] / s["initial_max"][1],
                "message": s["message"], "error": ""}
    except (PKSNSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return {"value": value, "classification": "error", "termination": "", "steps": 0,
                "t_final": math.nan, "peak_ratio1": math.nan, "peak_ratio2": math.nan,
                "message": "", "error": f"{type(exc).__name__}: {exc}"}


SWEEP_COLUMNS = ["value", "classification", "termination", "steps", "t_final",
                 "peak_ratio1", "peak_ratio2", "error"]


@dataclass
class SweepResult:
    key: str
    rows: list = field(default_factory=list)
    interval: tuple = None
    audit: list = field(default_factory=list)

    def to_csv(self):
        return rows_to_csv(SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in self.rows])

    def to_dict(self):
        return {"key": self.key, "rows": self.rows, "interval": self.interval,
                "monotonicity_violations": self.audit}


def _write_cells(outdir, rows):
    for i, row in enumerate(rows):
        write_json(os.path.join(outdir, "cells", f"cell_{i:03d}.json"), row)


def cmd_sweep(cfg, outdir, workers=1):
    key = cfg.experiment["sweep_key"]
    tasks = [(cfg, key, v) for v in cfg.experiment["values"]]
    result = SweepResult(key, parallel_map(_sweep_cell, tasks, workers))
    _write_cells(outdir, result.rows)
    write_text(os.path.join(outdir, "sweep.csv"), result.to_csv())
    write_json(os.path.join(outdir, "sweep.json"), result.to_dict())
    write_manifest(outdir, "sweep")
    return EXIT_OK


def monotonicity_audit(rows):
    """Adjacent pairs (in A) whose bounded/not-bounded labels switch back."""
    ordered = sorted(rows, key=lambda r: r["value"])
    flags = [r["classification"] == BOUNDED for r in ordered]
    if not flags:
        return []
    switches = [i for i in range(1, len(flags)) if flags[i] != flags[i - 1]]
    return [{"between": [ordered[i - 1]["value"], ordered[i]["value"]],
             "labels": [ordered[i - 1]["classification"], ordered[i]["classification"]]}
            for i in switches[1:]] if len(switches) > 1 else []


def bisect_threshold(evaluate, A_lo, A_hi, tol, max_iter=40):
    """Bisect on A for the switch between bounded and not bounded.

    ``evaluate(A)`` returns a sweep row with a ``classification``.  The
    endpoints must fall on opposite sides, otherwise ``BracketError`` is
    raised carrying both rows.
    """
    lo_row, hi_row = evaluate(A_lo), evaluate(A_hi)
    side = lambda row: row["classification"] == BOUNDED
    if side(lo_row) == side(hi_row):
        raise BracketError(
            f"endpoints A={A_lo} and A={A_hi} are both "
            f"{'bounded' if side(lo_row) else 'not bounded'}", [lo_row, hi_row])
    rows = [lo_row, hi_row]
    lo, hi = A_lo, A_hi
    s_lo = side(lo_row)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        row = evaluate(mid)
        rows.append(row)
        if side(row) == s_lo:
            lo = mid
        else:
            hi = mid
    result = SweepResult("A", rows, (lo, hi), monotonicity_audit(rows))
    return result


def cmd_bisect(cfg, outdir):
    exp = cfg.experiment
    evaluate = lambda A: _sweep_cell((cfg, "A", A))
    try:
        result = bisect_threshold(evaluate, exp["A_lo"], exp["A_hi"], exp["tol"], exp["max_iter"])
    except BracketError as exc:
        write_json(os.path.join(outdir, "bracket_error.json"),
                   {"error": str(exc), "summaries": exc.summaries})
        write_manifest(outdir, "bisect")
        print(f"pksns: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    _write_cells(outdir, result.rows)
    write_text(os.path.join(outdir, "bisect.csv"), result.to_csv())
    write_json(os.path.join(outdir, "bisect.json"), result.to_dict())
    write_manifest(outdir, "bisect")
    return EXIT_OK


# ----------------------------------------------------------------------
# linear analysis

def _slope_dict(xs, ys):
    if len(xs) < 2:
        return None
    return asdict(linanalysis.fit_loglog(xs, ys))


def _psi_cell(task):
    A, k, ny = task
    try:
        return asdict(linanalysis.compute_psi(A, k, ny=ny))
    except PKSNSError as exc:
        return {"A": A, "k": k, "psi": math.nan, "mu_star": math.nan, "error": str(exc)}


def cmd_resolvent(cfg, outdir, workers=1):
    exp = cfg.experiment
    A_values, k_values, ny = exp["A_values"], exp["k_values"], exp["ny_linear"]
    scan = linanalysis.scan_resolvent(A_values, k_values, ny=ny, workers=workers)
    psis = parallel_map(_psi_cell, [(A, k, ny) for A in A_values for k in k_values], workers)
    write_text(os.path.join(outdir, "resolvent.csv"), scan.to_csv())
    write_text(os.path.join(outdir, "psi.csv"), rows_to_csv(
        ["A", "k", "mu", "value", "regime"],
        [[p["A"], p["k"], p["mu_star"], p["psi"], "psi"] for p in psis]))
    summary = scan.summary()
    summary["psi"] = psis
    summary["psi_slopes"] = {
        str(k): _slope_dict([p["A"] for p in psis if p["k"] == k and math.isfinite(p["psi"])],
                            [p["psi"] for p in psis if p["k"] == k and math.isfinite(p["psi"])])
        for k in k_values}
    write_json(os.path.join(outdir, "resolvent.json"), summary)
    write_manifest(outdir, "resolvent")
    return EXIT_OK


def _decay_cell(task):
    A, k, ny, samples, horizon, nonlocal_term = task
    ts = linanalysis.default_decay_times(A, samples, horizon)
    return linanalysis.measure_semigroup_decay(A, k, ts, ny=ny, nonlocal_term=nonlocal_term)


def cmd_decay(cfg, outdir, workers=1):
    exp = cfg.experiment
    tasks = [(A, k, exp["ny_linear"], exp["decay_samples"], exp["decay_horizon"], nl)
             for nl in (False, True) for A in exp["A_values"] for k in exp["k_values"]]
    fits = parallel_map(_decay_cell, tasks, workers)
    write_text(os.path.join(outdir, "decay.csv"), linanalysis.decay_to_csv(fits))
    summary = {"fits": [], "slopes": {}, "c_prime": {}}
    for f in fits:
        summary["fits"].append({"A": f.A, "k": f.k, "operator": "vorticity" if f.nonlocal_term else "density",
                                "rate": f.rate, "prefactor": f.prefactor, "residual": f.residual,
                                "c_prime": f.c_prime, "bare_diffusion_factor": f.rate / ((math.pi / 2) ** 2 / f.A)})
    for label, nl in (("density", False), ("vorticity", True)):
        for k in exp["k_values"]:
            sel = [f for f in fits if f.nonlocal_term == nl and f.k == k]
            summary["slopes"][f"{label}:{k}"] = _slope_dict([f.A for f in sel], [f.rate for f in sel])
        sel = [f for f in fits if f.nonlocal_term == nl]
        cp = linanalysis.calibrate_c_prime(sel)
        summary["c_prime"][label] = {"calibrated": cp, "a_rate_suggested": cp / 2}
    write_json(os.path.join(outdir, "decay.json"), summary)
    write_manifest(outdir, "decay")
    return EXIT_OK


def _timespace_cell(task):
    A, k, a_rate, ny, horizon, dt, kind = task
    if kind == "none":
        y = ChannelGrid(8, ny).y
        forcing, f0 = linanalysis.Forcing("none"), (1.0 - y**2) * np.exp(y)
    else:
        forcing, f0 = linanalysis.Forcing("worst"), None
    return linanalysis.verify_timespace(A, k, forcing, a_rate, f0=f0, ny=ny,
                                        horizon=horizon * math.sqrt(A), dt=dt)


def cmd_timespace(cfg, outdir, workers=1):
    exp = cfg.experiment
    a_rate = cfg.params["a_rate"]
    tasks = [(A, k, a_rate, exp["ny_linear"], exp["horizon"], exp["ts_dt"], exp["forcing"])
             for A in exp["A_values"] for k in exp["k_values"]]
    reports = parallel_map(_timespace_cell, tasks, workers)
    write_text(os.path.join(outdir, "timespace.csv"), rows_to_csv(
        ["A", "k", "t", "value", "regime"],
        [[r.A, r.k, r.horizon, r.R, exp["forcing"]] for r in reports]))
    spread = {}
    for k in exp["k_values"]:
        Rs = [r.R for r in reports if r.k == k]
        spread[str(k)] = max(Rs) / min(Rs) if min(Rs) > 0 else math.inf
    write_json(os.path.join(outdir, "timespace.json"),
               {"reports": [asdict(r) for r in reports], "spread": spread, "a_rate": a_rate})
    write_manifest(outdir, "timespace")
    return EXIT_OK


# ----------------------------------------------------------------------
# inequality suite

def verify_suite(grid, bc, count, seed, flip_poincare=False):
    """Evaluate the a priori inequalities on ``count`` seeded random states."""
    worst = {}
    violations = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        state = diagnostics.random_state(grid, rng, bc, scale=float(rng.uniform(0.1, 10.0)))
        rep = diagnostics.verify_inequalities(state, bc, flip_poincare=flip_poincare)
        for e in rep.entries:
            w = worst.setdefault(e.name, {"theorem": e.theorem, "worst_slack": math.inf,
                                          "max_ratio": 0.0, "max_constant": 0.0})
            w["worst_slack"] = min(w["worst_slack"], e.slack)
            if e.rhs > 0:
                w["max_ratio"] = max(w["max_ratio"], e.lhs / e.rhs)
            if e.constant is not None:
                w["max_constant"] = max(w["max_constant"], e.constant)
            if e.theorem and not e.holds:
                violations.append({"state": i, "name": e.name, "lhs": e.lhs, "rhs": e.rhs})
    return {"states": count, "seed": seed, "bc": str(getattr(bc, "value", bc)),
            "inequalities": worst, "violations": violations}


def cmd_verify(cfg, outdir):
    exp = cfg.experiment
    report = verify_suite(build_grid(cfg), cfg.params["bc"], exp["states"], cfg.initial["seed"],
                          exp["flip_poincare"])
    write_json(os.path.join(outdir, "inequalities.json"), report)
    write_manifest(outdir, "verify")
    if report["violations"]:
        print(f"pksns: {len(report['violations'])} theorem-constant violations", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


# ----------------------------------------------------------------------
# entry point

COMMANDS = {
    "simulate": lambda cfg, out, w: cmd_simulate(cfg, out),
    "sweep": cmd_sweep,
    "bisect": lambda cfg, out, w: cmd_bisect(cfg, out),
    "resolvent": cmd_resolvent,
    "decay": cmd_decay,
    "timespace": cmd_timespace,
    "verify": lambda cfg, out, w: cmd_verify(cfg, out),
}


def build_parser():
    ap = argparse.ArgumentParser(prog="pksns", description=__doc__.splitlines()[0])
    ap.add_argument("verb", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="INI configuration file")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides [output] directory)")
    ap.add_argument("--threads", metavar="N", type=int, default=1, help="worker processes")
    ap.add_argument("--seed", metavar="S", type=int, help="overrides [initial] seed")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, mode=args.verb) if args.config else load_config(text="", mode=args.verb)
        if args.seed is not None:
            cfg.initial["seed"] = args.seed
        outdir = args.out or cfg.output["directory"]
        os.makedirs(outdir, exist_ok=True)
        return COMMANDS[args.verb](cfg, outdir, max(1, args.threads))
    except (ConfigError, UsageError) as exc:
        print(f"pksns: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PKSNSError, OSError, np.linalg.LinAlgError) as exc:
        print(f"pksns: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
