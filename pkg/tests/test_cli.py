"""End-to-end CLI tests: config handling, file schemas, determinism, exits."""

import json
import os

import numpy as np
import pytest

from ptdilate.cli import RunConfig, ValidationError, main


def run(*argv):
    return main(list(argv))


def read_meta(path):
    with open(path) as fh:
        first = fh.readline()
    assert first.startswith("# ")
    return json.loads(first[2:])


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    body = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return header, body


class TestConfig:
    def test_defaults_validate(self):
        RunConfig().validate()

    def test_aggregated_validation_report(self):
        cfg = RunConfig(r_list=[], margin=-1.0, substeps=0)
        with pytest.raises(ValidationError) as err:
            cfg.validate()
        msg = str(err.value)
        assert "r_list" in msg and "margin" in msg and "substeps" in msg

    def test_config_file_with_flag_override(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"r_list": [0.3], "n_nodes": 101, "t1": 1.0}))
        out = tmp_path / "out"
        assert run(
            "simulate", "--config", str(cfg_file), "--n-nodes", "201",
            "--outdir", str(out),
        ) == 0
        meta = read_meta(out / "trajectory_r0p3.csv")
        assert meta["config"]["n_nodes"] == 201  # flag wins
        assert meta["config"]["r_list"] == [0.3]  # file value kept

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"nodes": 10}))
        assert run("simulate", "--config", str(cfg_file)) == 1

    def test_outdir_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PTDILATE_OUTDIR", str(tmp_path))
        assert run("simulate", "--r", "0.2", "--n-nodes", "51", "--t1", "0.5") == 0
        assert (tmp_path / "trajectory_r0p2.csv").exists()


class TestDilateCommand:
    def test_hermitian_case_columns(self, tmp_path):
        assert run(
            "dilate", "--r", "0", "--n-nodes", "101", "--t1", "2",
            "--outdir", str(tmp_path),
        ) == 0
        header, body = read_csv(tmp_path / "aseries_r0.csv")
        assert header == ["t", "A1", "A2", "A3", "A4", "B1", "B2", "B3", "B4"]
        assert np.max(np.abs(body[:, 1] - 1.0)) < 1e-9  # A1 constant 1
        assert np.max(np.abs(body[:, 2:])) < 1e-9

    def test_diagnostics_json(self, tmp_path):
        assert run(
            "dilate", "--r", "0.6", "--n-nodes", "201", "--t1", "2",
            "--outdir", str(tmp_path),
        ) == 0
        diag = json.loads((tmp_path / "dilation_r0p6.json").read_text())
        assert diag["diagnostics"]["hermiticity"] <= 1e-10
        assert diag["m0"] > 1.0

    def test_invalid_margin_no_partial_files(self, tmp_path):
        out = tmp_path / "clean"
        assert run(
            "dilate", "--r", "0.6", "--margin", "-1", "--outdir", str(out)
        ) == 1
        assert not out.exists() or not list(out.iterdir())


class TestSimulateCommand:
    def test_oracle_columns_and_accuracy(self, tmp_path):
        assert run(
            "simulate", "--r", "0.6", "--n-nodes", "2001", "--t1", "4",
            "--outdir", str(tmp_path),
        ) == 0
        header, body = read_csv(tmp_path / "trajectory_r0p6.csv")
        assert header == ["t", "p0_sim", "p0_oracle", "abs_error", "success_prob"]
        meta = read_meta(tmp_path / "trajectory_r0p6.csv")
        assert meta["max_error"] <= 1e-4
        assert np.max(body[:, 3]) == pytest.approx(meta["max_error"])

    def test_empty_r_list_is_validation_error(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"r_list": []}))
        assert run("simulate", "--config", str(cfg_file)) == 1


class TestSweepAndFit:
    def test_matrix_layout_and_initial_column(self, tmp_path):
        assert run(
            "sweep", "--r", "0", "--r", "0.5", "--r", "1.2",
            "--n-nodes", "401", "--outdir", str(tmp_path), "--workers", "1",
        ) == 0
        header, body = read_csv(tmp_path / "sweep_p0.csv")
        assert header[0] == "r"
        assert np.allclose(body[:, 1], 1.0)  # P0(t=0) = 1 for every r

    def test_noisy_matrix_is_seed_deterministic(self, tmp_path):
        args = (
            "sweep", "--r", "0.5", "--n-nodes", "101", "--t1", "2",
            "--repetitions", "2000", "--seed", "9", "--outdir", str(tmp_path),
            "--workers", "1",
        )
        assert run(*args) == 0
        first = (tmp_path / "sweep_p0_noisy.csv").read_bytes()
        assert run(*args) == 0
        assert (tmp_path / "sweep_p0_noisy.csv").read_bytes() == first

    def test_fit_recovers_strengths(self, tmp_path):
        assert run(
            "sweep", "--r", "0.4", "--r", "1.1", "--n-nodes", "2001",
            "--outdir", str(tmp_path), "--workers", "1",
        ) == 0
        assert run(
            "fit", "--input", str(tmp_path / "sweep_p0.csv"),
            "--outdir", str(tmp_path),
        ) == 0
        _, fits = read_csv(tmp_path / "fits.csv")
        assert np.max(np.abs(fits[:, 1] - fits[:, 0])) <= 1e-3
        header, curve = read_csv(tmp_path / "eigencurve.csv")
        assert header[0] == "r_nominal"
        assert curve[0, 2] == 0.0  # Im E+ = 0 below the transition
        assert curve[1, 1] == 0.0  # Re E+ = 0 above it

    def test_fit_schema_mismatch(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("time,0.0,0.1\n0.5,1.0,0.9\n")
        assert run("fit", "--input", str(bad), "--outdir", str(tmp_path)) == 1


class TestPulsesAndVerify:
    def test_pulse_file_reports_roundtrip(self, tmp_path):
        assert run(
            "pulses", "--r", "0.6", "--n-nodes", "201", "--t1", "2",
            "--outdir", str(tmp_path),
        ) == 0
        meta = read_meta(tmp_path / "pulses_r0p6.csv")
        assert meta["roundtrip_residual"] <= 1e-9
        header, _ = read_csv(tmp_path / "pulses_r0p6.csv")
        assert header == ["t", "omega_rabi", "phase", "freq1_offset", "freq2_offset"]

    def test_verify_passes_on_defaults(self, tmp_path):
        assert run(
            "verify", "--r", "1.0", "--n-nodes", "1001", "--t1", "4",
            "--outdir", str(tmp_path),
        ) == 0

    def test_metadata_header_reproducibility_fields(self, tmp_path):
        assert run(
            "simulate", "--r", "0.3", "--n-nodes", "101", "--t1", "1",
            "--seed", "4", "--outdir", str(tmp_path),
        ) == 0
        meta = read_meta(tmp_path / "trajectory_r0p3.csv")
        assert {"config", "config_sha256", "seed", "version"} <= set(meta)
        assert meta["seed"] == 4


class TestExitCodes:
    def test_numeric_failure_exit_code(self, tmp_path):
        # Deep broken regime over a long horizon: the propagator condition
        # limit trips, which is a numeric (not config) failure.
        assert run(
            "simulate", "--r", "2.5", "--n-nodes", "4001", "--t1", "8",
            "--outdir", str(tmp_path),
        ) == 2

    def test_validation_exit_code(self, tmp_path):
        assert run("simulate", "--margin", "-1", "--outdir", str(tmp_path)) == 1
