"""
sde.py
──────
Integrates the six coupled positive-P stochastic differential equations of
the three-well system for a trajectory ensemble.

    dα1  = [−2iχ α1² α1⁺ + i K12 α2] dt                          + √(−2iχ α1²)  dW1
    dα1⁺ = [ 2iχ α1⁺² α1 − i K12 α2⁺] dt                          + √( 2iχ α1⁺²) dW2
    dα2  = [−i(E2 + 2χ α2⁺ α2) α2 + i(K12 α1 + K23 α3)] dt        + √(−2iχ α2²)  dW3
    dα2⁺ = [ i(E2 + 2χ α2⁺ α2) α2⁺ − i(K12 α1⁺ + K23 α3⁺)] dt     + √( 2iχ α2⁺²) dW4
    dα3  = [−2iχ α3² α3⁺ + i K23 α2] dt                          + √(−2iχ α3²)  dW5
    dα3⁺ = [ 2iχ α3⁺² α3 − i K23 α2⁺] dt                          + √( 2iχ α3⁺²) dW6

Itô calculus throughout: the noise amplitude is evaluated at the start of
each step. Trajectories are grouped into fixed batches (the unit of work
and of error estimation); a batch integrates all its trajectories as one
(6, n) array while each trajectory keeps drawing from its own RngStream.

USAGE:
    from ctapsteer.simulation.sde import run_ensemble

    result = run_ensemble(params, sim, workers=8)
    print(result.divergence.fraction)
    series = result.series()
"""

import math
import os
import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Optional

import numpy as np

from .model import ModelParams, SampleGrid, Scheme, SimParams, couplings, sample_grid
from .observables import (
    MomentRecord, WitnessSeries, batch_sums, record_from_batches,
    required_monomials, witness_series,
)
from .phasespace import FIELDS, PhasePoint, RngLike, RngStream, _generator, initial_batch


# Steps of noise drawn per trajectory at a time
NOISE_CHUNK = 256


class EmptyEnsembleError(ValueError):
    pass


class DivergenceLimitError(RuntimeError):
    """Too many trajectories diverged; the run left the positive-P stable regime."""

    def __init__(self, message: str, result: "EnsembleResult"):
        super().__init__(message)
        self.result = result


# ── TYPES ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DriftVector:
    a1:  complex
    a1p: complex
    a2:  complex
    a2p: complex
    a3:  complex
    a3p: complex

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FIELDS], dtype=complex)


@dataclass(frozen=True)
class NoiseAmplitudes:
    """b_j such that variable j receives b_j·dW_j."""
    a1:  complex
    a1p: complex
    a2:  complex
    a2p: complex
    a3:  complex
    a3p: complex

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FIELDS], dtype=complex)


@dataclass
class TrajectoryOutcome:
    samples:         list[PhasePoint]
    times:           list[float]
    diverged:        bool           = False
    divergence_time: Optional[float] = None


@dataclass
class DivergenceStats:
    n_traj:     int
    n_diverged: int
    per_batch:  list[int] = field(default_factory=list)

    @property
    def fraction(self) -> float:
        return self.n_diverged / self.n_traj if self.n_traj else 0.0


@dataclass
class EnsembleResult:
    moments:          MomentRecord
    divergence:       DivergenceStats
    grid:             SampleGrid
    duration_seconds: float = 0.0

    def series(self) -> WitnessSeries:
        return witness_series(self.moments, self.divergence.fraction)


@dataclass
class _BatchResult:
    index:      int
    sums:       dict
    count:      int
    n_diverged: int


# ── EQUATIONS OF MOTION ───────────────────────────────────────────────────────

def _drift_arrays(z: np.ndarray, k12: float, k23: float, p: ModelParams) -> np.ndarray:
    a1, a1p, a2, a2p, a3, a3p = z
    chi = p.chi
    out = np.empty_like(z)

    out[0] = -2j * chi * a1 * a1 * a1p + 1j * k12 * a2
    out[1] =  2j * chi * a1p * a1p * a1 - 1j * k12 * a2p

    level  = p.e2 + 2.0 * chi * a2p * a2
    out[2] = -1j * level * a2 + 1j * (k12 * a1 + k23 * a3)
    out[3] =  1j * level * a2p - 1j * (k12 * a1p + k23 * a3p)

    out[4] = -2j * chi * a3 * a3 * a3p + 1j * k23 * a2
    out[5] =  2j * chi * a3p * a3p * a3 - 1j * k23 * a2p
    return out


def _noise_arrays(z: np.ndarray, p: ModelParams, branch: int = 1) -> np.ndarray:
    # Principal branch. b only ever multiplies a sign-symmetric Gaussian, so
    # flipping the branch (branch = -1) leaves every moment unchanged.
    c = 2j * p.chi
    b = np.empty_like(z)
    b[0::2] = np.sqrt(-c * z[0::2] ** 2)
    b[1::2] = np.sqrt(c * z[1::2] ** 2)
    return b if branch == 1 else -b


def drift(x: PhasePoint, t: float, p: ModelParams) -> DriftVector:
    k12, k23 = couplings(t, p)
    values   = _drift_arrays(x.as_array()[:, None], k12, k23, p)[:, 0]
    return DriftVector(*(complex(v) for v in values))


def noise_amplitudes(x: PhasePoint, p: ModelParams) -> NoiseAmplitudes:
    values = _noise_arrays(x.as_array()[:, None], p)[:, 0]
    return NoiseAmplitudes(*(complex(v) for v in values))


def _advance(
    z:      np.ndarray,
    t:      float,
    dt:     float,
    p:      ModelParams,
    zeta:   Optional[np.ndarray],
    scheme: Scheme,
    branch: int = 1,
) -> np.ndarray:
    k12, k23 = couplings(t, p)
    if scheme == Scheme.RK4:
        k_mid = couplings(t + 0.5 * dt, p)
        k_end = couplings(t + dt, p)
        d1 = _drift_arrays(z, k12, k23, p)
        d2 = _drift_arrays(z + 0.5 * dt * d1, *k_mid, p)
        d3 = _drift_arrays(z + 0.5 * dt * d2, *k_mid, p)
        d4 = _drift_arrays(z + dt * d3, *k_end, p)
        increment = (dt / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    else:
        increment = _drift_arrays(z, k12, k23, p) * dt

    if zeta is not None:
        increment = increment + _noise_arrays(z, p, branch) * (math.sqrt(dt) * zeta)
    return z + increment


def step(
    x:      PhasePoint,
    t:      float,
    dt:     float,
    rng:    RngLike,
    p:      ModelParams,
    scheme: Scheme = Scheme.EULER,
    branch: int = 1,
) -> PhasePoint:
    """
    One Itô step: x' = x + drift(x, t)·dt + b(x)·√dt·ζ, ζ six independent
    standard normals. No noise is drawn when χ = 0.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    zeta = None
    if p.chi != 0:
        zeta = _generator(rng).standard_normal(len(FIELDS))[:, None]
    z = _advance(x.as_array()[:, None], t, dt, p, zeta, Scheme(scheme), branch)
    return PhasePoint.from_array(z[:, 0])


# ── INTEGRATION ───────────────────────────────────────────────────────────────

def _integrate(
    z0:         np.ndarray,
    p:          ModelParams,
    s:          SimParams,
    grid:       SampleGrid,
    generators: list[np.random.Generator],
    branch:     int = 1,
):
    """
    Fixed-step integration of a (6, n) batch from 0 to t_p.
    Returns (samples (n_times, 6, n), diverged (n,), divergence_time (n,)).
    A trajectory is flagged the first time any |α|² exceeds the threshold
    or goes non-finite; it is then frozen at zero but keeps consuming its
    noise stream.
    """
    n         = z0.shape[1]
    threshold = s.threshold_for(p)
    noisy     = p.chi != 0
    slots     = {int(k): i for i, k in enumerate(grid.steps)}

    z               = np.array(z0, dtype=complex)
    samples         = np.zeros((len(grid.steps), len(FIELDS), n), dtype=complex)
    diverged        = np.zeros(n, dtype=bool)
    divergence_time = np.full(n, np.nan)

    def check(z: np.ndarray, t: float):
        magnitude = z.real ** 2 + z.imag ** 2
        bad = (magnitude > threshold).any(axis=0) | ~np.isfinite(magnitude).all(axis=0)
        new = bad & ~diverged
        if new.any():
            diverged[new]        = True
            divergence_time[new] = t
        z[:, diverged] = 0.0

    with np.errstate(over="ignore", invalid="ignore"):
        check(z, 0.0)
        if 0 in slots:
            samples[slots[0]] = z

        for start in range(0, grid.n_steps, NOISE_CHUNK):
            length = min(NOISE_CHUNK, grid.n_steps - start)
            noise  = None
            if noisy:
                noise = np.stack([g.standard_normal((length, len(FIELDS))) for g in generators], axis=-1)

            for i in range(length):
                k = start + i
                z = _advance(z, k * s.dt, s.dt, p, None if noise is None else noise[i], s.scheme, branch)
                check(z, (k + 1) * s.dt)
                if k + 1 in slots:
                    samples[slots[k + 1]] = z

    return samples, diverged, divergence_time


def run_trajectory(x0: PhasePoint, p: ModelParams, s: SimParams, rng: RngLike) -> TrajectoryOutcome:
    """Integrate one trajectory, recording PhasePoints at the sample times."""
    grid = sample_grid(p, s)
    samples, diverged, divergence_time = _integrate(
        x0.as_array()[:, None], p, s, grid, [_generator(rng)]
    )

    if diverged[0]:
        cutoff = float(divergence_time[0])
        kept   = [i for i, t in enumerate(grid.times) if t < cutoff]
        return TrajectoryOutcome(
            samples         = [PhasePoint.from_array(samples[i, :, 0]) for i in kept],
            times           = [float(grid.times[i]) for i in kept],
            diverged        = True,
            divergence_time = cutoff,
        )

    return TrajectoryOutcome(
        samples = [PhasePoint.from_array(samples[i, :, 0]) for i in range(len(grid.times))],
        times   = [float(t) for t in grid.times],
    )


def _run_batch(task) -> _BatchResult:
    p, s, index, branch = task
    size    = s.n_traj // s.n_batches
    grid    = sample_grid(p, s)
    streams = [RngStream(s.seed, k) for k in range(index * size, (index + 1) * size)]

    # Initial draws and integrator noise come from the same per-trajectory stream
    z0 = initial_batch(p, streams)
    samples, diverged, _ = _integrate(z0, p, s, grid, [st.generator for st in streams], branch)

    keep = ~diverged
    return _BatchResult(
        index      = index,
        sums       = batch_sums(samples, keep, required_monomials(s.tripartite)),
        count      = int(keep.sum()),
        n_diverged = int(diverged.sum()),
    )


def run_ensemble(
    p:        ModelParams,
    s:        SimParams,
    workers:  Optional[int] = None,
    progress: Optional[Callable[[int, int], None]] = None,
    branch:   int = 1,
) -> EnsembleResult:
    """
    Run n_traj trajectories in n_batches fixed batches and accumulate the
    raw moments. Batches are merged in batch order, so the result is
    bit-identical for a given seed whatever the worker count.
    """
    if s.n_traj <= 0:
        raise EmptyEnsembleError("empty ensemble: n_traj must be positive")
    if s.n_batches <= 0 or s.n_traj % s.n_batches:
        raise ValueError(f"n_batches ({s.n_batches}) must divide n_traj ({s.n_traj})")

    start_time = time.time()
    grid       = sample_grid(p, s)
    workers    = workers or int(os.environ.get("CTAPSTEER_WORKERS", "1"))
    tasks      = [(p, s, b, branch) for b in range(s.n_batches)]

    results = []
    if workers <= 1:
        for task in tasks:
            results.append(_run_batch(task))
            if progress:
                progress(len(results), len(tasks))
    else:
        with Pool(processes=min(workers, len(tasks))) as pool:
            for result in pool.imap(_run_batch, tasks):
                results.append(result)
                if progress:
                    progress(len(results), len(tasks))

    results.sort(key=lambda r: r.index)
    n_diverged = sum(r.n_diverged for r in results)
    record     = record_from_batches(grid.times, [(r.sums, r.count) for r in results], n_diverged)
    stats      = DivergenceStats(
        n_traj     = s.n_traj,
        n_diverged = n_diverged,
        per_batch  = [r.n_diverged for r in results],
    )
    result = EnsembleResult(
        moments          = record,
        divergence       = stats,
        grid             = grid,
        duration_seconds = time.time() - start_time,
    )

    if stats.fraction > s.divergence_limit:
        raise DivergenceLimitError(
            f"{n_diverged}/{s.n_traj} trajectories diverged "
            f"({stats.fraction:.2%} > limit {s.divergence_limit:.2%})",
            result,
        )
    return result


# ── STEP-SIZE CONVERGENCE ─────────────────────────────────────────────────────

@dataclass
class ConvergenceReport:
    dt:          float
    max_ratio:   dict                   # observable → max |Δ| / combined error
    sigma:       float

    @property
    def converged(self) -> bool:
        return all(r <= self.sigma for r in self.max_ratio.values())


def compare_series(a: WitnessSeries, b: WitnessSeries) -> dict:
    """Largest |a − b| / √(err_a² + err_b²) per observable over sample times."""
    ratios = {}
    for name in WitnessSeries.OBSERVABLES:
        diff     = np.abs(getattr(a, name) - getattr(b, name))
        combined = np.hypot(getattr(a, f"{name}_err"), getattr(b, f"{name}_err"))
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(diff == 0, 0.0, diff / combined)
        ratios[name] = float(np.nanmax(z))
    return ratios


def convergence_check(
    p:       ModelParams,
    s:       SimParams,
    workers: Optional[int] = None,
    sigma:   float = 3.0,
) -> ConvergenceReport:
    """
    Rerun at dt/2 with the same seed and compare every observable. The two
    runs share initial states but not noise paths, so differences are
    judged against the combined standard error.
    """
    coarse = run_ensemble(p, s, workers=workers).series()
    fine   = run_ensemble(p, s.model_copy(update={"dt": s.dt / 2}), workers=workers).series()
    return ConvergenceReport(dt=s.dt, max_ratio=compare_series(coarse, fine), sigma=sigma)
