import json
import os
import sys
import tempfile

# Resolve project root so ctapsteer package is importable regardless of CWD
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from ctapsteer.cli import main
from ctapsteer.simulation.config import load_config
from ctapsteer.simulation.pipeline import ExitCode, SimulationPipeline


SMALL_RUN = """
[model]
omega   = 2
t_p     = 1
chi     = 1e-2
n_total = 2

[sim]
dt        = 0.01
n_traj    = 400
n_batches = 10
n_samples = 5
"""


def _config_file(directory: str, extra: str = "") -> str:
    path = os.path.join(directory, "small.ini")
    with open(path, "w", encoding="utf-8") as f:
        f.write(SMALL_RUN + extra)
    return path


def test_zero_trajectories_is_a_validation_error():
    with tempfile.TemporaryDirectory() as tmp:
        stem = os.path.join(tmp, "out")
        code = main(["--traj", "0", "--quiet", "--output", stem])
        assert code == ExitCode.VALIDATION == 2
        assert os.listdir(tmp) == []


def test_missing_config_file_is_io_error():
    assert main(["--config", "/nonexistent/run.ini", "--quiet"]) == ExitCode.IO


def test_non_utf8_config_is_a_validation_error():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "latin1.ini")
        with open(path, "wb") as f:
            f.write(b"[model]\nchi = 1e-4 # \xff\xfe\n")
        assert main(["--config", path, "--quiet", "--output", os.path.join(tmp, "out")]) == ExitCode.VALIDATION
        assert os.listdir(tmp) == ["latin1.ini"]


def test_both_modes_write_series_and_agreement():
    with tempfile.TemporaryDirectory() as tmp:
        stem = os.path.join(tmp, "fock")
        code = main([
            "--config", _config_file(tmp), "--state", "fock", "--mode", "both",
            "--output", stem, "--quiet",
        ])
        assert code == ExitCode.OK
        for suffix in ("_stochastic.csv", "_oracle.csv", "_agreement.csv", "_manifest.json"):
            assert os.path.exists(stem + suffix), suffix

        with open(stem + "_manifest.json", encoding="utf-8") as f:
            manifest = json.load(f)
        assert manifest["seed"] == 1
        assert manifest["divergence"]["n_traj"] == 400
        assert "agreement_passed" in manifest
        assert "hermiticity" in manifest

        with open(stem + "_stochastic.csv", encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert lines[0].startswith("time,n1,n1_err")
        assert len(lines) == 1 + 5


def test_identical_runs_are_byte_identical():
    with tempfile.TemporaryDirectory() as tmp:
        config = _config_file(tmp)
        first  = os.path.join(tmp, "a")
        second = os.path.join(tmp, "b")
        assert main(["--config", config, "--output", first, "--quiet"]) == ExitCode.OK
        assert main(["--config", config, "--output", second, "--quiet", "--workers", "2"]) == ExitCode.OK
        with open(first + "_stochastic.csv", "rb") as a, open(second + "_stochastic.csv", "rb") as b:
            assert a.read() == b.read()


def test_divergence_limit_exit_code():
    with tempfile.TemporaryDirectory() as tmp:
        stem = os.path.join(tmp, "diverged")
        code = main(["--config", _config_file(tmp, "divergence_threshold = 1.0\n"), "--output", stem, "--quiet"])
        assert code == ExitCode.DIVERGENCE
        assert not os.path.exists(stem + "_stochastic.csv")
        with open(stem + "_manifest.json", encoding="utf-8") as f:
            assert json.load(f)["divergence"]["n_diverged"] == 400


def test_json_output_and_tripartite_manifest():
    with tempfile.TemporaryDirectory() as tmp:
        stem = os.path.join(tmp, "tri")
        code = main([
            "--config", _config_file(tmp, "tripartite = true\n"), "--format", "json",
            "--output", stem, "--quiet",
        ])
        assert code == ExitCode.OK
        with open(stem + "_stochastic.json", encoding="utf-8") as f:
            payload = json.load(f)
        assert len(payload["rows"]) == 5
        assert set(payload["moments"]) == {"a1dag_a3_re", "a1dag_a3_im", "n1n3", "n_total"}
        with open(stem + "_manifest.json", encoding="utf-8") as f:
            assert set(json.load(f)["three_mode_steering"]) == {"123", "132", "213", "231", "312", "321"}


def test_dry_run_writes_nothing():
    with tempfile.TemporaryDirectory() as tmp:
        config = load_config(_config_file(tmp), overrides={"output": {"path": os.path.join(tmp, "dry")}})
        result = SimulationPipeline(verbose=False, dry_run=True).run(config)
        assert result.success and result.files == []
        assert result.stochastic is not None and result.oracle is None
        assert os.listdir(tmp) == ["small.ini"]


def test_check_dt_reports():
    with tempfile.TemporaryDirectory() as tmp:
        config = load_config(_config_file(tmp), overrides={"run": {"check_dt": True}})
        result = SimulationPipeline(verbose=False, dry_run=True).run(config)
        assert result.success


if __name__ == "__main__":
    test_zero_trajectories_is_a_validation_error()
    test_missing_config_file_is_io_error()
    test_non_utf8_config_is_a_validation_error()
    test_both_modes_write_series_and_agreement()
    test_identical_runs_are_byte_identical()
    test_divergence_limit_exit_code()
    test_json_output_and_tripartite_manifest()
    test_dry_run_writes_nothing()
    test_check_dt_reports()
    print("test_cli: all passed")
