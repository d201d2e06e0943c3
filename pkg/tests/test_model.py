import math
import os
import sys

# Resolve project root so ctapsteer package is importable regardless of CWD
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

import numpy as np
import pytest

from ctapsteer.simulation.model import (
    ModelParams, SimParams, coupling_k12, coupling_k23, couplings,
    sample_grid, snap_sample_times, steps_for, validate,
)


P = ModelParams(omega=10.0, t_p=40.0)


def test_coupling_endpoints():
    assert coupling_k12(0.0, P) == 0.0
    assert coupling_k12(40.0, P) == pytest.approx(10.0, abs=1e-12)
    assert coupling_k12(20.0, P) == pytest.approx(5.0, abs=1e-12)
    assert coupling_k23(0.0, P) == 10.0
    assert coupling_k23(40.0, P) == pytest.approx(0.0, abs=1e-12)


def test_couplings_sum_to_omega():
    rng = np.random.default_rng(7)
    for t in np.concatenate([[0.0, 40.0], rng.uniform(0.0, 40.0, 1000)]):
        k12, k23 = couplings(t, P)
        assert k12 + k23 == pytest.approx(10.0, abs=1e-12)
        assert k12 == coupling_k12(t, P)


def test_coupling_outside_window_raises():
    for t in (-0.1, 40.5):
        with pytest.raises(ValueError):
            coupling_k12(t, P)
        with pytest.raises(ValueError):
            coupling_k23(t, P)


def test_defaults_are_valid():
    report = validate(ModelParams(), SimParams())
    assert report.valid, report.violations
    assert report.warnings == []


def test_violations_are_collected():
    report = validate(ModelParams(t_p=-1.0), SimParams(n_traj=0))
    assert not report.valid
    assert any("t_p" in v for v in report.violations)
    assert any("n_traj" in v for v in report.violations)


def test_batches_must_divide_trajectories():
    report = validate(ModelParams(), SimParams(n_traj=1000, n_batches=30))
    assert any("divide" in v for v in report.violations)
    report = validate(ModelParams(), SimParams(n_traj=1000, n_batches=1))
    assert any("at least 2" in v for v in report.violations)


def test_large_chi_warns():
    report = validate(ModelParams(chi=0.1), SimParams())
    assert report.valid
    assert any("chi" in w for w in report.warnings)


def test_tp_must_sit_on_dt_grid():
    assert steps_for(40.0, 2e-3) == 20_000
    with pytest.raises(ValueError):
        steps_for(40.0, 0.3)
    report = validate(ModelParams(), SimParams(dt=0.3))
    assert not report.valid


def test_default_grid_has_81_times():
    grid = sample_grid(P, SimParams(dt=0.01))
    assert len(grid.times) == 81
    assert grid.times[0] == 0.0
    assert grid.times[-1] == pytest.approx(40.0)
    assert grid.steps[-1] == grid.n_steps == 4000


def test_snapping():
    grid = snap_sample_times([0.0, 1.004, 2.0], dt=0.01, t_p=4.0)
    assert list(grid.steps) == [0, 100, 200]
    with pytest.raises(ValueError):
        snap_sample_times([1.0, 1.001], dt=0.01, t_p=4.0)
    with pytest.raises(ValueError):
        snap_sample_times([5.0], dt=0.01, t_p=4.0)


def test_params_are_frozen():
    with pytest.raises(Exception):
        P.chi = 1.0
    assert math.isclose(SimParams().threshold_for(P), 2e8)


if __name__ == "__main__":
    test_coupling_endpoints()
    test_couplings_sum_to_omega()
    test_coupling_outside_window_raises()
    test_defaults_are_valid()
    test_violations_are_collected()
    test_batches_must_divide_trajectories()
    test_large_chi_warns()
    test_tp_must_sit_on_dt_grid()
    test_default_grid_has_81_times()
    test_snapping()
    test_params_are_frozen()
    print("test_model: all passed")
