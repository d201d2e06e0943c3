"""
phasespace.py
─────────────
Initial positive-P phase-space points and the random streams behind them.

Every trajectory owns one RngStream keyed by (seed, trajectory index). The
initial-state draws come first and the integrator keeps drawing its noise
from the same stream, so a trajectory is reproducible on its own no matter
which worker or batch it runs in.

Samplers:
  Coherent |α⟩  → α_P = α, α_P⁺ = α*            (deterministic)
  Fock |N⟩      → α_P = μ + γ, α_P⁺ = μ* − γ*
                  μ = √z e^{iθ}, z ~ Gamma(N+1, 1), θ ~ U[0, 2π)
                  γ = (η1 + iη2)/√2, η ~ N(0, 1)
  Vacuum        → coherent with α = 0 (no sampling noise)
"""

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

from .model import ModelParams, SimParams, StateKind


# Storage order of the six variables in every (6, n_traj) array
FIELDS = ("a1", "a1p", "a2", "a2p", "a3", "a3p")


# ── TYPES ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PhasePoint:
    """One trajectory's six positive-P amplitudes (α_j, α_j⁺)."""
    a1:  complex = 0j
    a1p: complex = 0j
    a2:  complex = 0j
    a2p: complex = 0j
    a3:  complex = 0j
    a3p: complex = 0j

    def __post_init__(self):
        for name in FIELDS:
            value = complex(getattr(self, name))
            if not cmath.isfinite(value):
                raise ValueError(f"PhasePoint.{name} is not finite: {value}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FIELDS], dtype=complex)

    @classmethod
    def from_array(cls, values) -> "PhasePoint":
        return cls(*(complex(v) for v in values))


@dataclass
class RngStream:
    """
    A reproducible random stream. Identical (seed, stream_id) pairs give
    bit-identical sequences; distinct pairs are statistically independent
    (numpy SeedSequence spawn keys feeding PCG64).
    """
    seed:       int
    stream_id:  int
    _generator: Optional[np.random.Generator] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= value < 2 ** 64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            sequence        = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
            self._generator = np.random.Generator(np.random.PCG64(sequence))
        return self._generator


RngLike = Union[RngStream, np.random.Generator]


def _generator(rng: RngLike) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


# ── SAMPLERS ──────────────────────────────────────────────────────────────────

def sample_coherent(amplitude: complex) -> tuple[complex, complex]:
    amplitude = complex(amplitude)
    return amplitude, amplitude.conjugate()


def sample_gamma(n: int, rng: RngLike, size=None):
    """
    Draw z ~ Gamma(shape n+1, scale 1), density e^{-z} z^n / n!.
    numpy's standard_gamma uses the Marsaglia-Tsang squeeze method for
    shape > 1 and the exponential distribution at shape 1 (n = 0).
    """
    if n < 0:
        raise ValueError(f"Fock number must be non-negative, got {n}")
    return _generator(rng).standard_gamma(n + 1.0, size)


def sample_fock(n: int, rng: RngLike, size=None):
    """Sample (α_P, α_P⁺) for the Fock state |n⟩. Scalars unless size is given."""
    gen   = _generator(rng)
    z     = sample_gamma(n, gen, size)
    theta = gen.uniform(0.0, 2.0 * math.pi, size)
    shape = (2,) if size is None else (2,) + tuple(np.atleast_1d(size))
    eta   = gen.standard_normal(shape)

    mu    = np.sqrt(z) * np.exp(1j * theta)
    gamma = (eta[0] + 1j * eta[1]) / math.sqrt(2.0)

    alpha      = mu + gamma
    alpha_plus = np.conj(mu) - np.conj(gamma)

    if size is None:
        return complex(alpha), complex(alpha_plus)
    return alpha, alpha_plus


# ── INITIAL ENSEMBLE ──────────────────────────────────────────────────────────

def initial_point(p: ModelParams, rng: RngLike) -> PhasePoint:
    """Well 1 in the configured state, wells 2 and 3 in vacuum."""
    if p.state_kind == StateKind.FOCK:
        a1, a1p = sample_fock(p.n_total, rng)
    else:
        a1, a1p = sample_coherent(math.sqrt(p.n_total) * cmath.exp(1j * p.initial_phase))
    return PhasePoint(a1=a1, a1p=a1p)


def initial_ensemble(p: ModelParams, s: SimParams) -> Iterator[PhasePoint]:
    """Trajectory k is sampled from RngStream(seed, k)."""
    for k in range(s.n_traj):
        yield initial_point(p, RngStream(s.seed, k))


def initial_batch(p: ModelParams, streams: list[RngStream]) -> np.ndarray:
    """Initial points for a batch of streams as a (6, len(streams)) array."""
    out = np.zeros((len(FIELDS), len(streams)), dtype=complex)
    for column, stream in enumerate(streams):
        out[:, column] = initial_point(p, stream).as_array()
    return out
