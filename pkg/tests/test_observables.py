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
from ctapsteer.simulation.observables import (
    M11, M13, M1133, UnsupportedMomentError, cavalcanti_estimate, cavalcanti_witness,
    frozen_state_moments, frozen_state_xi, hermiticity_report, hz_entanglement,
    jackknife_error, monomial, number_monomial, populations, required_monomials,
    steering_monomials, xi_pair,
)
from ctapsteer.simulation.sde import run_ensemble


SMALL_MODEL = ModelParams(omega=2.0, t_p=2.0, chi=1e-3, n_total=20)
SMALL_SIM   = SimParams(dt=0.01, n_traj=200, n_batches=10, n_samples=5, seed=5)


def _run(**model_updates):
    return run_ensemble(SMALL_MODEL.model_copy(update=model_updates), SMALL_SIM).moments


# ── MONOMIALS ─────────────────────────────────────────────────────────────────

def test_monomial_layout():
    assert M11 == (1, 1, 0, 0, 0, 0)
    assert M13 == (0, 1, 0, 0, 1, 0)
    assert M1133 == (1, 1, 0, 0, 1, 1)
    assert number_monomial(3, 1) == M1133
    with pytest.raises(ValueError):
        number_monomial(1, 1)


def test_steering_monomials_two_mode():
    product, conjugate, terms = steering_monomials((1, 3))
    assert product == M13
    assert conjugate == monomial(plain=(1,), plus=(3,))
    assert terms == [(1.0, M1133), (0.5, M11)]


def test_three_mode_moments_are_optional():
    core = required_monomials()
    full = required_monomials(tripartite=True)
    assert len(core) == 6
    assert set(core) < set(full)
    assert number_monomial(1, 2, 3) in full
    for ordering in ((1, 2), (2, 1), (2, 3), (3, 2)):
        product, conjugate, _ = steering_monomials(ordering)
        assert product in full and conjugate in full


# ── WITNESSES ─────────────────────────────────────────────────────────────────

def test_initial_values_coherent():
    record = _run()
    n1, n2, n3 = populations(record)
    assert n1.value[0] == pytest.approx(20.0, rel=1e-12)
    assert n2.value[0] == 0 and n3.value[0] == 0

    xi13, xi31 = xi_pair(record)
    assert xi13.value[0] == pytest.approx(-10.0, rel=1e-12)
    assert xi31.value[0] == 0
    assert xi13.error[0] <= 1e-12 and xi31.error[0] == 0
    assert hz_entanglement(record).value[0] == 0


def test_initial_values_fock():
    record = _run(state_kind=StateKind.FOCK)
    xi13, xi31 = xi_pair(record)
    assert abs(xi13.value[0] + 10.0) <= 4 * xi13.error[0]
    assert xi31.value[0] == 0
    assert abs(populations(record)[0].value[0] - 20.0) <= 4 * populations(record)[0].error[0]


def test_two_mode_cavalcanti_matches_xi_pair():
    record     = _run(state_kind=StateKind.FOCK)
    xi13, xi31 = xi_pair(record)
    assert np.array_equal(cavalcanti_witness(record, (1, 3)), xi13.value)
    assert np.array_equal(cavalcanti_witness(record, (3, 1)), xi31.value)


def test_cavalcanti_vacuum_is_zero():
    means = {m: np.zeros(3, dtype=complex) for m in required_monomials(tripartite=True)}
    for ordering in ((1, 3), (2, 1), (1, 2, 3), (3, 2, 1)):
        assert np.all(cavalcanti_witness(means, ordering) == 0)


def test_three_mode_witness_needs_tripartite_moments():
    record = _run()
    for ordering in ((1, 2, 3), (2, 1)):
        with pytest.raises(UnsupportedMomentError):
            cavalcanti_witness(record, ordering)

    sim    = SMALL_SIM.model_copy(update={"tripartite": True})
    record = run_ensemble(SMALL_MODEL, sim).moments
    estimate = cavalcanti_estimate(record, (1, 2, 3))
    assert estimate.value.shape == (5,)
    assert np.all(np.isfinite(estimate.error))

    # Pairs involving the middle well; mode 2 starts empty
    for ordering in ((1, 2), (2, 1), (2, 3), (3, 2)):
        estimate = cavalcanti_estimate(record, ordering)
        assert np.all(np.isfinite(estimate.value)) and np.all(np.isfinite(estimate.error))
    assert cavalcanti_estimate(record, (2, 1)).value[0] == 0
    assert cavalcanti_estimate(record, (1, 2)).value[0] == pytest.approx(-10.0, rel=1e-12)


def test_hermiticity_diagnostics():
    model  = SMALL_MODEL.model_copy(update={"state_kind": StateKind.FOCK})
    sim    = SMALL_SIM.model_copy(update={"n_traj": 400, "n_batches": 40})
    report = hermiticity_report(run_ensemble(model, sim).moments)
    assert "im_m11" in report and "re_m13_minus_conj_m31" in report
    assert all(value < 5 for value in report.values()), report


# ── FROZEN STATE ──────────────────────────────────────────────────────────────

def test_frozen_state_values():
    assert frozen_state_xi(StateKind.COHERENT, 200) == -50.0
    assert frozen_state_xi(StateKind.FOCK, 200) == -10050.0
    with pytest.raises(ValueError):
        frozen_state_xi(StateKind.FOCK, 201)


def test_frozen_coherent_product_is_separable():
    record = frozen_state_moments(StateKind.COHERENT, 200, n_samples=1000, n_batches=10)
    assert hz_entanglement(record).value[0] == 0
    xi13, xi31 = xi_pair(record)
    assert xi13.value[0] == pytest.approx(-50.0, abs=1e-9)
    assert xi31.value[0] == pytest.approx(-50.0, abs=1e-9)


def test_frozen_fock_monte_carlo_matches_analytic():
    record = frozen_state_moments(StateKind.FOCK, 200, n_samples=100_000, seed=2)
    xi13, xi31 = xi_pair(record)
    for estimate in (xi13, xi31):
        assert abs(estimate.value[0] + 10050.0) <= 4 * estimate.error[0]


# ── JACKKNIFE ─────────────────────────────────────────────────────────────────

def test_jackknife_constant_batches():
    assert jackknife_error(np.full(10, 3.5), lambda m: m) == 0
    assert jackknife_error({M11: np.full((10, 4), 2 + 0j)}, lambda m: np.real(m[M11]) ** 2).max() == 0


def test_jackknife_linear_matches_standard_error():
    rng   = np.random.default_rng(0)
    means = rng.normal(5.0, 2.0, size=50)
    expected = np.std(means, ddof=1) / math.sqrt(means.size)
    assert jackknife_error(means, lambda m: m) == pytest.approx(expected, rel=1e-10)


def test_jackknife_needs_two_batches():
    with pytest.raises(ValueError):
        jackknife_error(np.array([1.0]), lambda m: m)


if __name__ == "__main__":
    test_monomial_layout()
    test_steering_monomials_two_mode()
    test_three_mode_moments_are_optional()
    test_initial_values_coherent()
    test_initial_values_fock()
    test_two_mode_cavalcanti_matches_xi_pair()
    test_cavalcanti_vacuum_is_zero()
    test_three_mode_witness_needs_tripartite_moments()
    test_hermiticity_diagnostics()
    test_frozen_state_values()
    test_frozen_coherent_product_is_separable()
    test_frozen_fock_monte_carlo_matches_analytic()
    test_jackknife_constant_batches()
    test_jackknife_linear_matches_standard_error()
    test_jackknife_needs_two_batches()
    print("test_observables: all passed")
