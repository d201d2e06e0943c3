import math
import os
import sys

# Resolve project root so ctapsteer package is importable regardless of CWD
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

import numpy as np
import pytest

from ctapsteer.simulation.model import ModelParams, SimParams, StateKind
from ctapsteer.simulation.phasespace import (
    PhasePoint, RngStream, initial_batch, initial_ensemble, initial_point,
    sample_coherent, sample_fock, sample_gamma,
)


def test_coherent_sampler():
    assert sample_coherent(math.sqrt(200)) == (math.sqrt(200), math.sqrt(200))
    assert sample_coherent(0) == (0j, 0j)
    assert sample_coherent(1j) == (1j, -1j)


def test_streams_are_reproducible_and_distinct():
    a = RngStream(7, 3).generator.standard_normal(5)
    b = RngStream(7, 3).generator.standard_normal(5)
    c = RngStream(7, 4).generator.standard_normal(5)
    d = RngStream(8, 3).generator.standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    with pytest.raises(ValueError):
        RngStream(-1, 0)


def test_gamma_moments():
    z = sample_gamma(0, RngStream(1, 0), size=200_000)
    assert abs(z.mean() - 1.0) < 5 * math.sqrt(1.0 / z.size)

    z = sample_gamma(200, RngStream(1, 1), size=1_000_000)
    assert abs(z.mean() - 201.0) < 4 * math.sqrt(201.0 / z.size)
    assert abs(z.var() - 201.0) < 5 * math.sqrt(2 * 201.0 ** 2 / z.size)
    assert np.all(z >= 0)

    with pytest.raises(ValueError):
        sample_gamma(-1, RngStream(1, 0))


def test_fock_normally_ordered_moments():
    n = 200
    a, ap = sample_fock(n, RngStream(3, 0), size=1_000_000)

    def check(values, expected, sigmas=4.0):
        err = math.sqrt(np.var(values) / values.size)
        assert abs(values.mean() - expected) < sigmas * err + 1e-12, (values.mean(), expected, err)

    number = ap * a
    check(number.real, n)
    check(number.imag, 0.0)
    check((ap ** 2 * a ** 2).real, n * (n - 1))
    check(a.real, 0.0)
    check(a.imag, 0.0)


def test_fock_scalar_draw():
    a, ap = sample_fock(5, RngStream(1, 0))
    assert isinstance(a, complex) and isinstance(ap, complex)
    b, bp = sample_fock(5, RngStream(1, 0))
    assert (a, ap) == (b, bp)


def test_phase_point_rejects_non_finite():
    with pytest.raises(ValueError):
        PhasePoint(a1=float("nan"))
    point = PhasePoint(a1=1 + 2j, a3p=3)
    assert PhasePoint.from_array(point.as_array()) == point


def test_coherent_ensemble_is_deterministic():
    p = ModelParams(n_total=200)
    s = SimParams(n_traj=10, n_batches=2)
    for point in initial_ensemble(p, s):
        assert point == PhasePoint(a1=math.sqrt(200), a1p=math.sqrt(200))


def test_fock_ensemble_mean_number():
    p       = ModelParams(n_total=200, state_kind=StateKind.FOCK)
    streams = [RngStream(11, k) for k in range(20_000)]
    z       = initial_batch(p, streams)
    number  = (z[1] * z[0]).real
    assert abs(number.mean() - 200) < 4 * number.std() / math.sqrt(number.size)
    assert np.all(z[2:] == 0)


def test_initial_point_matches_stream():
    p = ModelParams(n_total=10, state_kind=StateKind.FOCK)
    s = SimParams(n_traj=4, n_batches=2, seed=5)
    points = list(initial_ensemble(p, s))
    assert points[2] == initial_point(p, RngStream(5, 2))
    assert points[0] != points[1]


if __name__ == "__main__":
    test_coherent_sampler()
    test_streams_are_reproducible_and_distinct()
    test_gamma_moments()
    test_fock_normally_ordered_moments()
    test_fock_scalar_draw()
    test_phase_point_rejects_non_finite()
    test_coherent_ensemble_is_deterministic()
    test_fock_ensemble_mean_number()
    test_initial_point_matches_stream()
    print("test_phasespace: all passed")
