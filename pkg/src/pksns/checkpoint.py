"""Checkpoints: a JSON manifest plus one field block per prognostic field.

The manifest records the format version, the run parameters, the time,
the termination status and the field files.  ``u01`` is stored inside
the manifest as a list of floats; JSON float output round-trips exactly,
so a restart continues from bit-identical data.
"""

import json
import os
from dataclasses import asdict

import numpy as np

from .dynamics import SimParams, SimState
from .errors import UsageError
from .fieldio import read_field, write_field

CHECKPOINT_VERSION = 1
MANIFEST = "checkpoint.json"
FIELDS = ("n1", "n2", "omega")


def save_checkpoint(state, params, directory, termination=None, fmt="bin"):
    os.makedirs(directory, exist_ok=True)
    ext = "csv" if fmt == "csv" else "bin"
    files = {}
    for name in FIELDS:
        fname = f"{name}.{ext}"
        write_field(getattr(state, name), os.path.join(directory, fname), fmt)
        files[name] = fname
    params_dict = asdict(params)
    params_dict["bc"] = params.bc.value
    manifest = {
        "version": CHECKPOINT_VERSION,
        "t": float(state.t),
        "termination": termination,
        "params": params_dict,
        "files": files,
        "u01": [float(v) for v in state.u01],
    }
    path = os.path.join(directory, MANIFEST)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_checkpoint(directory):
    """Return ``(state, params, manifest)``; rejects other format versions."""
    with open(os.path.join(directory, MANIFEST), encoding="utf-8") as fh:
        manifest = json.load(fh)
    version = manifest.get("version")
    if version != CHECKPOINT_VERSION:
        raise UsageError(f"checkpoint version {version!r} is not {CHECKPOINT_VERSION}")
    fields = {name: read_field(os.path.join(directory, manifest["files"][name])) for name in FIELDS}
    grids = {f.grid for f in fields.values()}
    if len(grids) != 1:
        raise UsageError("checkpoint fields live on different grids")
    u01 = np.array(manifest["u01"], dtype=float)
    state = SimState(manifest["t"], fields["n1"], fields["n2"], fields["omega"], u01)
    params = SimParams(**manifest["params"])
    return state, params, manifest
