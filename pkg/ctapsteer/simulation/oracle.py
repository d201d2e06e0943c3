"""
oracle.py
─────────
Exact Schrödinger evolution of the three-mode Hamiltonian for small atom
numbers, used as ground truth for the positive-P ensemble.

H conserves total number, so a Fock input |N,0,0⟩ lives in the
(N+1)(N+2)/2 dimensional basis of triples (n1, n2, n3) with n1+n2+n3 = N.
The state is a dense vector; H is applied on the fly from precomputed
hop tables (source index, target index, √ matrix element) and never
stored as a matrix.

Coherent input is a Poisson mixture of number sectors. Every observable
reported here conserves number, so sector coherences drop out and the
expectation values are the Poisson-weighted sector averages.

USAGE:
    from ctapsteer.simulation.oracle import build_basis, fock_state, evolve

    state  = fock_state(build_basis(4))
    series = evolve(state, params, [0.0, 20.0, 40.0])
    print(series.xi13)
"""

import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import poisson

from .model import ModelParams, StateKind, couplings
from .observables import M11, M13, M22, M31, M33, M1133, WitnessSeries, exact_series


# Largest step × (spectral-radius bound) the RK4 propagator will take
STABILITY_PRODUCT = 0.02


class OracleCapError(ValueError):
    pass


class OracleStepError(RuntimeError):
    """Norm drifted beyond tolerance; the propagation step is too large."""


class OracleParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    cap:       int   = Field(default=20,    description="Largest total atom number for the exact basis")
    step:      float = Field(default=1e-3,  description="RK4 step, reduced automatically when too large")
    norm_tol:  float = Field(default=1e-6,  description="Largest tolerated norm drift per sector")
    tail_mass: float = Field(default=1e-10, description="Omitted Poisson mass for coherent input")


# ── BASIS ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Hop:
    """a_to† a_from restricted to the basis: amp[target] += value·amp[source]."""
    source: np.ndarray
    target: np.ndarray
    value:  np.ndarray


@dataclass
class FockBasis:
    n_total: int
    states:  list[tuple[int, int, int]]
    index:   dict = field(repr=False)
    occupation: np.ndarray = field(repr=False)         # (size, 3) int
    hops:    dict = field(repr=False)                  # (to, from) → Hop

    @property
    def size(self) -> int:
        return len(self.states)

    def number(self, mode: int) -> np.ndarray:
        return self.occupation[:, mode - 1].astype(float)


def _hop(states, index, to_mode: int, from_mode: int) -> Hop:
    source, target, value = [], [], []
    i, j = to_mode - 1, from_mode - 1
    for position, occ in enumerate(states):
        if occ[j] == 0:
            continue
        moved     = list(occ)
        moved[j] -= 1
        moved[i] += 1
        source.append(position)
        target.append(index[tuple(moved)])
        value.append(math.sqrt(occ[j] * (occ[i] + 1)))
    return Hop(
        source = np.array(source, dtype=np.int64),
        target = np.array(target, dtype=np.int64),
        value  = np.array(value, dtype=float),
    )


def build_basis(n_total: int, cap: int = 20) -> FockBasis:
    """All (n1, n2, n3) with n1+n2+n3 = n_total, lexicographic order."""
    if n_total < 0:
        raise ValueError(f"n_total must be non-negative, got {n_total}")
    if n_total > cap:
        raise OracleCapError(f"n_total = {n_total} exceeds the oracle cap of {cap}")

    states = [
        (n1, n2, n_total - n1 - n2)
        for n1 in range(n_total + 1)
        for n2 in range(n_total - n1 + 1)
    ]
    index = {occ: position for position, occ in enumerate(states)}
    hops  = {
        pair: _hop(states, index, *pair)
        for pair in ((1, 2), (2, 1), (2, 3), (3, 2), (1, 3))
    }
    return FockBasis(
        n_total    = n_total,
        states     = states,
        index      = index,
        occupation = np.array(states, dtype=np.int64).reshape(-1, 3),
        hops       = hops,
    )


# ── STATES ────────────────────────────────────────────────────────────────────

@dataclass
class Sector:
    weight:     float
    basis:      FockBasis
    amplitudes: np.ndarray


@dataclass
class OracleState:
    """A weighted list of number sectors; a Fock input has exactly one."""
    sectors: list[Sector]

    @property
    def basis(self) -> FockBasis:
        return self.sectors[0].basis

    @property
    def amplitudes(self) -> np.ndarray:
        return self.sectors[0].amplitudes

    def norms(self) -> np.ndarray:
        return np.array([np.vdot(s.amplitudes, s.amplitudes).real for s in self.sectors])


def fock_state(basis: FockBasis) -> OracleState:
    """|N, 0, 0⟩."""
    amplitudes = np.zeros(basis.size, dtype=complex)
    amplitudes[basis.index[(basis.n_total, 0, 0)]] = 1.0
    return OracleState(sectors=[Sector(weight=1.0, basis=basis, amplitudes=amplitudes)])


def coherent_sector_decomposition(amplitude: complex, tail_mass: float = 1e-10, cap: int = 20):
    """
    Poisson weights e^{−|α|²}|α|^{2n}/n! of the number sectors of |α⟩, from
    n = 0 up to the first n whose upper tail mass is below tail_mass.
    """
    mean = abs(complex(amplitude)) ** 2
    if mean > cap:
        raise OracleCapError(f"|amplitude|² = {mean:g} exceeds the oracle cap of {cap}")
    if not 0 < tail_mass < 1:
        raise ValueError(f"tail_mass must lie in (0, 1), got {tail_mass}")
    if mean == 0:
        return [(1.0, 0)]

    n_max = max(int(poisson.isf(tail_mass, mean)), 0)
    while poisson.sf(n_max, mean) >= tail_mass:
        n_max += 1
    weights = poisson.pmf(np.arange(n_max + 1), mean)
    return [(float(w), n) for n, w in enumerate(weights) if w > 0]


def coherent_state(amplitude: complex, tail_mass: float = 1e-10, cap: int = 20) -> OracleState:
    """
    Sector n starts in |n, 0, 0⟩. Bases above the cap are allowed here as
    long as |α|² itself is within it.
    """
    sectors = []
    for weight, n in coherent_sector_decomposition(amplitude, tail_mass, cap):
        sector        = fock_state(build_basis(n, cap=max(cap, n))).sectors[0]
        sector.weight = weight
        sectors.append(sector)
    return OracleState(sectors=sectors)


def initial_state(p: ModelParams, oracle: Optional[OracleParams] = None) -> OracleState:
    oracle = oracle or OracleParams()
    if p.state_kind == StateKind.FOCK:
        return fock_state(build_basis(p.n_total, cap=oracle.cap))
    return coherent_state(math.sqrt(p.n_total), oracle.tail_mass, oracle.cap)


# ── HAMILTONIAN ───────────────────────────────────────────────────────────────

def _diagonal(basis: FockBasis, p: ModelParams) -> np.ndarray:
    n = basis.occupation.astype(float)
    return p.e2 * n[:, 1] + p.chi * (n * (n - 1.0)).sum(axis=1)


def _apply(basis: FockBasis, diagonal: np.ndarray, amplitudes: np.ndarray, k12: float, k23: float) -> np.ndarray:
    out = diagonal * amplitudes
    for (to_mode, from_mode), strength in (((1, 2), k12), ((2, 1), k12), ((2, 3), k23), ((3, 2), k23)):
        if strength == 0:
            continue
        hop = basis.hops[(to_mode, from_mode)]
        # targets are unique within one hop, so plain fancy-index addition is exact
        out[hop.target] -= strength * hop.value * amplitudes[hop.source]
    return out


def apply_hamiltonian(state: OracleState, t: float, p: ModelParams) -> OracleState:
    """H(t)|ψ⟩ for every sector (weights carried through unchanged)."""
    k12, k23 = couplings(t, p)
    return OracleState(sectors=[
        Sector(
            weight     = s.weight,
            basis      = s.basis,
            amplitudes = _apply(s.basis, _diagonal(s.basis, p), s.amplitudes, k12, k23),
        )
        for s in state.sectors
    ])


def spectral_bound(n_total: int, p: ModelParams) -> float:
    """Upper bound on ‖H(t)‖ over the pulse for an n-atom sector."""
    single = 0.5 * (abs(p.e2) + math.sqrt(p.e2 ** 2 + 4.0 * p.omega ** 2))
    return n_total * single + abs(p.chi) * n_total * max(n_total - 1, 0)


# ── EXPECTATIONS ──────────────────────────────────────────────────────────────

def _sector_moments(basis: FockBasis, amplitudes: np.ndarray) -> dict:
    probability = np.abs(amplitudes) ** 2
    n1, n3      = basis.number(1), basis.number(3)
    hop         = basis.hops[(1, 3)]
    a1dag_a3    = np.sum(np.conj(amplitudes[hop.target]) * hop.value * amplitudes[hop.source])
    return {
        M11:   complex(probability @ n1),
        M22:   complex(probability @ basis.number(2)),
        M33:   complex(probability @ n3),
        M13:   complex(a1dag_a3),
        M31:   complex(np.conj(a1dag_a3)),
        M1133: complex(probability @ (n1 * n3)),
    }


def expectation_values(state: OracleState) -> dict:
    """Weight-averaged normally ordered moments, keyed like ensemble moments."""
    total  = sum(s.weight for s in state.sectors)
    merged = {}
    for s in state.sectors:
        for key, value in _sector_moments(s.basis, s.amplitudes).items():
            merged[key] = merged.get(key, 0j) + s.weight * value
    return {key: value / total for key, value in merged.items()}


# ── PROPAGATION ───────────────────────────────────────────────────────────────

def _rk4(basis, diagonal, psi, t, h, p):
    def f(tau, y):
        return -1j * _apply(basis, diagonal, y, *couplings(tau, p))

    k1 = f(t, psi)
    k2 = f(t + 0.5 * h, psi + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, psi + 0.5 * h * k2)
    k4 = f(t + h, psi + h * k3)
    return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _evolve_sector(sector: Sector, p: ModelParams, times: np.ndarray, step: float, norm_tol: float) -> list[dict]:
    basis    = sector.basis
    diagonal = _diagonal(basis, p)
    bound    = spectral_bound(basis.n_total, p)
    h_max    = step if bound == 0 else min(step, STABILITY_PRODUCT / bound)

    psi   = sector.amplitudes.astype(complex)
    norm0 = np.vdot(psi, psi).real
    t     = 0.0
    out   = []

    for target in times:
        span = target - t
        if span > 0:
            n_steps = max(1, math.ceil(span / h_max - 1e-9))
            h       = span / n_steps
            for k in range(n_steps):
                psi   = _rk4(basis, diagonal, psi, t + k * h, h, p)
                drift = abs(np.vdot(psi, psi).real - norm0)
                if not drift <= norm_tol:
                    raise OracleStepError(
                        f"norm drift {drift:.3g} exceeds {norm_tol:g} in the N = {basis.n_total} "
                        f"sector at t = {t + (k + 1) * h:.6g}; reduce the oracle step"
                    )
            t = float(target)
        out.append(_sector_moments(basis, psi))
    return out


def _sector_task(task) -> list[dict]:
    return _evolve_sector(*task)


def evolve(
    state0:       OracleState,
    p:            ModelParams,
    sample_times,
    step:         float = 1e-3,
    norm_tol:     float = 1e-6,
    workers:      Optional[int] = None,
) -> WitnessSeries:
    """
    Propagate i d|ψ⟩/dt = H(t)|ψ⟩ with fixed-step RK4 from t = 0 and return
    exact populations and witnesses at sample_times. The state is never
    renormalized; norm drift is the accuracy monitor. Number sectors are
    independent and run in a process pool when workers > 1.
    """
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("sample_times must be a non-empty list")
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if times[0] < 0 or times[-1] > p.t_p * (1 + 1e-12):
        raise ValueError(f"sample times must lie in [0, {p.t_p}]")
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")

    total = sum(s.weight for s in state0.sectors)
    means = {key: np.zeros(times.size, dtype=complex) for key in (M11, M22, M33, M13, M31, M1133)}
    tasks = [(sector, p, times, step, norm_tol) for sector in state0.sectors]
    if workers and workers > 1 and len(tasks) > 1:
        with Pool(processes=min(workers, len(tasks))) as pool:
            per_sector = pool.map(_sector_task, tasks)
    else:
        per_sector = [_sector_task(task) for task in tasks]

    for sector, history in zip(state0.sectors, per_sector):
        for i, moments in enumerate(history):
            for key, value in moments.items():
                means[key][i] += sector.weight * value
    for key in means:
        means[key] /= total

    return exact_series(times, means)


def run_oracle(
    p:            ModelParams,
    sample_times,
    oracle:       Optional[OracleParams] = None,
    workers:      Optional[int] = None,
) -> WitnessSeries:
    oracle = oracle or OracleParams()
    return evolve(initial_state(p, oracle), p, sample_times, oracle.step, oracle.norm_tol, workers)
