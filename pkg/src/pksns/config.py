"""Experiment configuration: typed INI sections with a closed schema.

Every key has a type and either a default or ``REQUIRED``.  Unknown
sections or keys are rejected, and errors name the file line.  Any key
can be overridden from the environment as ``PKSNS_<SECTION>__<KEY>``,
for example ``PKSNS_PARAMS__A=3000``.

Values: numbers in Python syntax, booleans as true/false/yes/no/1/0,
lists as comma-separated values, and bumps as
``species:x0:y0:width[:weight]`` items separated by ``;``.
"""

import configparser
import math
import os
import re
from dataclasses import dataclass, field

from .dynamics import SCHEMES, Bump, SimParams
from .elliptic import DensityBC
from .errors import ConfigError

REQUIRED = object()
ENV_PREFIX = "PKSNS_"
MODES = ("simulate", "sweep", "bisect", "resolvent", "decay", "timespace", "verify")
SWEEP_KEYS = ("A", "chi1", "chi2", "mass1", "mass2")


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _float_list(text):
    return [_float(t) for t in text.split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _bumps(text):
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) not in (4, 5):
            raise ValueError(f"bump {item!r} needs species:x0:y0:width[:weight]")
        vals = [_float(v) for v in parts[1:]]
        out.append(Bump(int(parts[0]), *vals))
    return out


def _choice(*options):
    def parse(text):
        v = text.strip()
        for candidate in (v, v.lower()):
            if candidate in options:
                return candidate
        raise ValueError(f"expected one of {', '.join(options)}")
    return parse


SCHEMA = {
    "grid": {
        "nx": (int, 64),
        "ny": (int, 64),
        "dealias": (_bool, True),
    },
    "params": {
        "A": (_float, REQUIRED),
        "chi1": (_float, 1.0),
        "chi2": (_float, 1.0),
        "bc": (_choice("neumann", "dirichlet"), "neumann"),
        "a_rate": (_float, 0.35),
        "dt": (_float, 1e-2),
        "t_end": (_float, 1.0),
        "physical_time": (_bool, False),
        "cfl_safety": (_float, 0.5),
        "blowup_factor": (_float, 1e4),
        "scheme": (_choice(*SCHEMES), "imex_euler"),
        "scheme_shear_off": (_choice("", *SCHEMES), ""),
        "shear": (_choice("implicit", "explicit"), "implicit"),
        "max_halvings": (int, 12),
    },
    "initial": {
        "bumps": (_bumps, "1:3.141592653589793:0.0:0.3;2:3.141592653589793:0.0:0.3"),
        "masses": (_float_list, "1.0, 1.0"),
        "seed": (int, 0),
        "noise": (_float, 0.0),
        "vortex_amplitude": (_float, 0.0),
        "vortex_x0": (_float, math.pi),
        "vortex_y0": (_float, 0.0),
        "vortex_width": (_float, 0.3),
        "u01_amplitude": (_float, 0.0),
    },
    "experiment": {
        "mode": (_choice(*MODES), "simulate"),
        "sweep_key": (_choice(*SWEEP_KEYS), "A"),
        "values": (_float_list, ""),
        "A_lo": (_float, 0.0),
        "A_hi": (_float, 1e4),
        "tol": (_float, 100.0),
        "max_iter": (int, 40),
        "A_values": (_float_list, "100, 1000, 10000"),
        "k_values": (_int_list, "1"),
        "ny_linear": (int, 128),
        "decay_samples": (int, 41),
        "decay_horizon": (_float, 12.0),
        "horizon": (_float, 20.0),
        "forcing": (_choice("worst", "none"), "worst"),
        "ts_dt": (_float, 0.05),
        "states": (int, 100),
        "flip_poincare": (_bool, False),
    },
    "output": {
        "directory": (str, "pksns-out"),
        "sample_every": (_float, 0.0),
        "snapshot_every": (int, 0),
        "field_format": (_choice("bin", "csv"), "bin"),
        "checkpoint": (_bool, True),
    },
}


@dataclass
class ExperimentConfig:
    grid: dict
    params: dict
    initial: dict
    experiment: dict
    output: dict
    source: str = "<defaults>"
    overrides: dict = field(default_factory=dict)

    @property
    def mode(self):
        return self.experiment["mode"]

    def sim_params(self, **changes):
        """SimParams for one run.

        ``physical_time`` reads t_end and dt in unscaled time and stretches
        them by A; ``scheme_shear_off`` (if set) replaces the scheme at A = 0.
        """
        vals = dict(self.params)
        vals.update(changes)
        physical = vals.pop("physical_time")
        shear_off = vals.pop("scheme_shear_off")
        if physical and vals["A"] > 0:
            vals["t_end"] = vals["t_end"] * vals["A"]
            vals["dt"] = vals["dt"] * vals["A"]
        if shear_off and vals["A"] == 0:
            vals["scheme"] = shear_off
        try:
            return SimParams(**vals)
        except ConfigError as exc:
            raise ConfigError(f"{self.source}: [params] {exc}") from None

    def as_dict(self):
        return {s: dict(getattr(self, s)) for s in SCHEMA}


def _line_index(text):
    """Map (section, key) to 1-based line numbers in an INI text."""
    index, section = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), lineno)
            continue
        key = stripped.split("=", 1)[0].strip()
        if section is not None and key:
            index.setdefault((section, key), lineno)
    return index


def _parse_value(section, key, raw, where):
    parser = SCHEMA[section][key][0]
    try:
        return parser(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: [{section}] {key} = {raw!r}: {exc}") from None


def load_config(path=None, text=None, env=None, mode=None):
    """Parse and validate a configuration; ``env`` defaults to ``os.environ``.

    ``mode`` (the CLI verb) replaces ``[experiment] mode`` before validation.
    """
    if text is None and path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            raise ConfigError(f"configuration file {path} not found") from None
    text = text or ""
    source = str(path) if path is not None else "<config>"
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _line_index(text)

    def where(section, key=None):
        ln = lines.get((section, key)) or lines.get((section, None))
        return f"{source}:{ln}" if ln else source

    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{where(section)}: unknown section [{section}]")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{where(section, key)}: unknown key {key!r} in [{section}]")

    values, overrides = {}, {}
    env = os.environ if env is None else env
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (_, default) in keys.items():
            env_name = f"{ENV_PREFIX}{section.upper()}__{key.upper()}"
            if env_name in env:
                raw, loc = env[env_name], f"environment {env_name}"
                overrides[env_name] = raw
            elif cp.has_option(section, key):
                raw, loc = cp[section][key], where(section, key)
            elif default is REQUIRED:
                values[section][key] = REQUIRED
                continue
            else:
                raw, loc = default, f"default for {key}"
            values[section][key] = _parse_value(section, key, raw, loc) if isinstance(raw, str) else raw

    known = {f"{ENV_PREFIX}{s.upper()}__{k.upper()}" for s, ks in SCHEMA.items() for k in ks}
    for name in env:
        if name.startswith(ENV_PREFIX) and "__" in name and name not in known:
            raise ConfigError(f"environment {name}: unknown configuration key")

    cfg = ExperimentConfig(source=source, overrides=overrides, **values)
    if mode is not None:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        cfg.experiment["mode"] = mode
    _validate(cfg, where)
    return cfg


def _validate(cfg, where):
    mode = cfg.mode
    needs_A = mode in ("simulate", "verify") or (mode == "sweep" and cfg.experiment["sweep_key"] != "A")
    if cfg.params["A"] is REQUIRED:
        if needs_A:
            raise ConfigError(f"{where('params')}: missing required key 'A' in [params]")
        cfg.params["A"] = 0.0
    g = cfg.grid
    if g["nx"] < 8 or g["nx"] % 2 or g["ny"] < 8:
        raise ConfigError(f"{where('grid', 'nx')}: nx must be even >= 8 and ny >= 8")
    if len(cfg.initial["masses"]) != 2:
        raise ConfigError(f"{where('initial', 'masses')}: masses needs two values")
    exp = cfg.experiment
    if mode == "sweep" and len(exp["values"]) < 2:
        raise ConfigError(f"{where('experiment', 'values')}: a sweep needs at least two values")
    if mode == "bisect" and not (0 <= exp["A_lo"] < exp["A_hi"]):
        raise ConfigError(f"{where('experiment', 'A_lo')}: need 0 <= A_lo < A_hi")
    if mode == "bisect" and exp["tol"] <= 0:
        raise ConfigError(f"{where('experiment', 'tol')}: tol must be positive")
    if mode in ("resolvent", "decay", "timespace"):
        if not exp["A_values"] or any(a < 1 for a in exp["A_values"]):
            raise ConfigError(f"{where('experiment', 'A_values')}: A values must be >= 1")
        if not exp["k_values"] or 0 in exp["k_values"]:
            raise ConfigError(f"{where('experiment', 'k_values')}: k values must be nonzero")
    if cfg.output["sample_every"] < 0:
        raise ConfigError(f"{where('output', 'sample_every')}: sample_every must be >= 0")
    DensityBC.coerce(cfg.params["bc"])
    cfg.sim_params()
