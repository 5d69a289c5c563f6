import json
import math
import os

import numpy as np
import pytest

from pksns import cli
from pksns import dynamics as dy
from pksns.checkpoint import CHECKPOINT_VERSION, load_checkpoint, save_checkpoint
from pksns.errors import BracketError, UsageError
from pksns.grid import ChannelGrid

SIM = """\
[grid]
nx = 24
ny = 24

[params]
A = 50
dt = 0.1
t_end = 1.0
scheme = etdrk2

[initial]
bumps = 1:3.14:0.0:0.6; 2:2.0:0.2:0.6
masses = 3.0, 1.0
noise = 0.1
seed = 4
vortex_amplitude = 0.5

[output]
sample_every = 0.25
snapshot_every = 2
"""


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


class TestSimulate:
    def test_outputs_and_manifest(self, tmp_path):
        cfg = write_config(tmp_path, SIM)
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", cfg, "--out", out) == cli.EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        paths = {f["path"] for f in manifest["files"]}
        assert {"diagnostics.csv", "summary.json", "checkpoint/checkpoint.json",
                "checkpoint/n1.bin", "snapshots/0000_n1.bin", "snapshots/0002_omega.bin"} <= paths
        for f in manifest["files"]:
            assert f["sha256"] == cli.sha256(out / f["path"])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["termination"] == "completed"
        assert summary["mass_final"][0] == pytest.approx(3.0, abs=1e-10)
        lines = (out / "diagnostics.csv").read_text().splitlines()
        assert lines[0].startswith("t,n1_zero_l2,") and lines[0].endswith(",energy")
        assert len(lines) == 1 + 5

    def test_deterministic_csv(self, tmp_path):
        cfg = write_config(tmp_path, SIM)
        for name in ("a", "b"):
            assert run_cli("simulate", "--config", cfg, "--out", tmp_path / name) == 0
        for f in ("diagnostics.csv", "summary.json", "checkpoint/n1.bin"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_flag_changes_noise(self, tmp_path):
        cfg = write_config(tmp_path, SIM)
        run_cli("simulate", "--config", cfg, "--out", tmp_path / "a")
        run_cli("simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", 99)
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() != (tmp_path / "b" / "diagnostics.csv").read_bytes()

    def test_checkpoint_restart_state(self, tmp_path):
        cfg = write_config(tmp_path, SIM)
        run_cli("simulate", "--config", cfg, "--out", tmp_path / "o")
        state, params, manifest = load_checkpoint(tmp_path / "o" / "checkpoint")
        assert manifest["termination"] == "completed"
        assert state.t == pytest.approx(1.0) and params.A == 50.0


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SIM + "[bogus]\n")
        assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_CONFIG
        assert "unknown section [bogus]" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert run_cli("simulate", "--config", tmp_path / "none.ini", "--out", tmp_path) == cli.EXIT_CONFIG

    def test_unknown_verb(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("explode")
        assert exc.value.code == 2

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PKSNS_PARAMS__A", "0.5")
        cfg = write_config(tmp_path, SIM)
        assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_CONFIG

    def test_verify_passes_and_flip_fails(self, tmp_path):
        text = "[grid]\nnx = 24\nny = 32\n[params]\nA = 10\n[experiment]\nstates = 6\n"
        cfg = write_config(tmp_path, text)
        assert run_cli("verify", "--config", cfg, "--out", tmp_path / "ok") == cli.EXIT_OK
        report = json.loads((tmp_path / "ok" / "inequalities.json").read_text())
        assert report["violations"] == [] and report["states"] == 6
        flipped = write_config(tmp_path, text + "flip_poincare = true\n", "flip.ini")
        assert run_cli("verify", "--config", flipped, "--out", tmp_path / "bad") == cli.EXIT_VIOLATION


def threshold_row(A, threshold=3.7):
    return {"value": A, "classification": "bounded" if A >= threshold else "blow_up_flagged"}


class TestBisect:
    def test_interval_brackets_threshold(self):
        calls = []

        def evaluate(A):
            calls.append(A)
            return threshold_row(A)

        result = cli.bisect_threshold(evaluate, 0.0, 10.0, tol=0.1)
        lo, hi = result.interval
        assert lo < 3.7 <= hi and hi - lo <= 0.1
        assert len(calls) == 2 + math.ceil(math.log2(10.0 / 0.1))
        assert result.audit == []

    def test_reversed_orientation(self):
        result = cli.bisect_threshold(lambda A: threshold_row(-A, -3.7), 0.0, 10.0, tol=0.5)
        lo, hi = result.interval
        assert lo <= 3.7 < hi

    def test_max_iter_caps_work(self):
        result = cli.bisect_threshold(threshold_row, 0.0, 10.0, tol=1e-9, max_iter=3)
        assert len(result.rows) == 5
        assert result.interval[1] - result.interval[0] == pytest.approx(10.0 / 8)

    def test_bracket_error(self):
        with pytest.raises(BracketError) as exc:
            cli.bisect_threshold(threshold_row, 5.0, 10.0, tol=0.1)
        assert len(exc.value.summaries) == 2

    def test_monotonicity_audit(self):
        rows = [threshold_row(A) for A in (1, 5, 9)]
        rows.append({"value": 7, "classification": "inconclusive"})
        audit = cli.monotonicity_audit(rows)
        # one switch is expected; every further switch is reported
        assert audit == [{"between": [5, 7], "labels": ["bounded", "inconclusive"]},
                         {"between": [7, 9], "labels": ["inconclusive", "bounded"]}]
        assert cli.monotonicity_audit([threshold_row(A) for A in (1, 5, 9)]) == []

    def test_cli_bracket_error_exit(self, tmp_path):
        text = SIM.replace("masses = 3.0, 1.0", "masses = 0.5, 0.5") + \
            "[experiment]\nA_lo = 10\nA_hi = 100\ntol = 50\n"
        cfg = write_config(tmp_path, text)
        assert run_cli("bisect", "--config", cfg, "--out", tmp_path / "o") == cli.EXIT_VIOLATION
        err = json.loads((tmp_path / "o" / "bracket_error.json").read_text())
        assert "both bounded" in err["error"] and len(err["summaries"]) == 2


class TestSweep:
    def test_sweep_cells_parallel(self, tmp_path):
        text = SIM + "[experiment]\nsweep_key = chi1\nvalues = 0.5, 1.0, 2.0\n"
        cfg = write_config(tmp_path, text)
        out = tmp_path / "o"
        assert run_cli("sweep", "--config", cfg, "--out", out, "--threads", 2) == cli.EXIT_OK
        assert sorted(os.listdir(out / "cells")) == ["cell_000.json", "cell_001.json", "cell_002.json"]
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == ",".join(cli.SWEEP_COLUMNS)
        assert [l.split(",")[0] for l in lines[1:]] == ["0.5", "1.0", "2.0"]

    def test_failed_cell_is_recorded(self, tmp_path):
        cfg = cli.load_config(text=SIM, env={})
        row = cli._sweep_cell((cfg, "A", 0.5))
        assert row["classification"] == "error" and "A must be 0" in row["error"]


LINEAR = """\
[experiment]
A_values = 100, 400
k_values = 1
ny_linear = 32
decay_samples = 9
horizon = 5
ts_dt = 0.5
"""


class TestLinearCommands:
    def test_resolvent(self, tmp_path):
        cfg = write_config(tmp_path, LINEAR)
        assert run_cli("resolvent", "--config", cfg, "--out", tmp_path / "o") == 0
        data = json.loads((tmp_path / "o" / "resolvent.json").read_text())
        assert len(data["cells"]) == 2 and "1" in data["slopes"] and "1" in data["psi_slopes"]
        assert (tmp_path / "o" / "psi.csv").read_text().startswith("A,k,mu,value,regime\n")

    def test_decay(self, tmp_path):
        cfg = write_config(tmp_path, LINEAR)
        assert run_cli("decay", "--config", cfg, "--out", tmp_path / "o") == 0
        data = json.loads((tmp_path / "o" / "decay.json").read_text())
        assert {f["operator"] for f in data["fits"]} == {"density", "vorticity"}
        assert data["c_prime"]["density"]["a_rate_suggested"] == pytest.approx(
            data["c_prime"]["density"]["calibrated"] / 2)

    def test_timespace(self, tmp_path):
        cfg = write_config(tmp_path, LINEAR + "forcing = none\n")
        assert run_cli("timespace", "--config", cfg, "--out", tmp_path / "o") == 0
        data = json.loads((tmp_path / "o" / "timespace.json").read_text())
        assert len(data["reports"]) == 2 and data["spread"]["1"] >= 1.0


class TestCheckpoint:
    @pytest.mark.parametrize("fmt", ["bin", "csv"])
    def test_round_trip_is_exact(self, tmp_path, fmt):
        g = ChannelGrid(24, 24)
        s = dy.make_initial(g, [dy.Bump(1, 2.0, 0.1, 0.6), dy.Bump(2, 4.0, 0.0, 0.6)], (1.0, 2.0),
                            vortex={"amplitude": 1.0}, u01_amplitude=0.3)
        s.t = 0.1 + 0.2
        p = dy.SimParams(A=100, bc="dirichlet", scheme="sbdf2", dt=0.05)
        save_checkpoint(s, p, tmp_path, "completed", fmt)
        back, q, manifest = load_checkpoint(tmp_path)
        assert q == p and back.t == s.t
        for name in ("n1", "n2", "omega"):
            np.testing.assert_array_equal(getattr(back, name).values, getattr(s, name).values)
        np.testing.assert_array_equal(back.u01, s.u01)
        assert manifest["version"] == CHECKPOINT_VERSION

    def test_restart_matches_continuous_run(self, tmp_path):
        g = ChannelGrid(16, 16)
        s0 = dy.make_initial(g, [dy.Bump(1, 2.0, 0.0, 0.8), dy.Bump(2, 4.0, 0.0, 0.8)], (2.0, 1.0))
        p = dy.SimParams(A=20, dt=0.1, t_end=1.0, scheme="etd1")
        full = dy.run(s0, p).final_state
        half = dy.run(s0, dy.SimParams(A=20, dt=0.1, t_end=0.5, scheme="etd1")).final_state
        save_checkpoint(half, p, tmp_path)
        mid, _, _ = load_checkpoint(tmp_path)
        resumed = dy.run(mid, dy.SimParams(A=20, dt=0.1, t_end=0.5, scheme="etd1")).final_state
        assert resumed.t == pytest.approx(1.0)
        np.testing.assert_allclose(resumed.n1.values, full.n1.values, atol=1e-12)

    def test_version_rejected(self, tmp_path):
        g = ChannelGrid(16, 16)
        z = g.zeros()
        save_checkpoint(dy.SimState(0.0, z, z, z, np.zeros(17)), dy.SimParams(A=10), tmp_path)
        path = tmp_path / "checkpoint.json"
        data = json.loads(path.read_text())
        data["version"] = CHECKPOINT_VERSION + 1
        path.write_text(json.dumps(data))
        with pytest.raises(UsageError, match="version"):
            load_checkpoint(tmp_path)
