"""
model.py
────────
Physical and numerical parameters of the three-well CTAP system, the
counter-intuitive tunnelling schedules, and configuration validation.

The Hamiltonian (units of ħ, all quantities dimensionless):

    H = E2 N2 + χ Σ_j a_j†² a_j² − K12(t)(a1†a2 + h.c.) − K23(t)(a2†a3 + h.c.)

with E1 = E3 = 0, K12(t) = Ω sin²(πt/2t_p) and K23(t) = Ω cos²(πt/2t_p).
K23 is on at t = 0 and K12 at t = t_p, which is the STIRAP ordering that
moves the atoms from well 1 to well 3 through the dark state.

USAGE:
    from ctapsteer.simulation.model import ModelParams, SimParams, validate

    params = ModelParams(chi=1e-4, n_total=200)
    sim    = SimParams(n_traj=55_000, seed=7)

    report = validate(params, sim)
    if not report.valid:
        print(report.violations)
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


# ── ENUMS ─────────────────────────────────────────────────────────────────────

class StateKind(str, Enum):
    COHERENT = "coherent"       # Glauber coherent state, fixed amplitude and phase
    FOCK     = "fock"           # fixed number, indeterminate phase


class Scheme(str, Enum):
    EULER = "euler"             # Euler-Maruyama
    RK4   = "rk4"               # RK4 drift, Itô noise increment at the step start


# ── PARAMETERS ────────────────────────────────────────────────────────────────

class ModelParams(BaseModel):
    """Physical parameters. Defaults are the population-transfer figure values."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega:          float     = Field(default=10.0,   description="Tunnelling scale Ω")
    t_p:            float     = Field(default=40.0,   description="Pulse time; t runs over [0, t_p]")
    e2:             float     = Field(default=1.0,    description="Middle-well energy E2 (E1 = E3 = 0)")
    chi:            float     = Field(default=1e-4,   description="Collisional nonlinearity χ")
    n_total:        int       = Field(default=200,    description="Mean total atom number, all in well 1 at t = 0")
    state_kind:     StateKind = Field(default=StateKind.COHERENT, description="Initial quantum state of well 1")
    initial_phase:  float     = Field(default=0.0,    description="Phase of the coherent amplitude (radians)")


class SimParams(BaseModel):
    """Numerical parameters of a stochastic run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dt:                   float                       = Field(default=2e-3,  description="Integrator step")
    n_traj:               int                         = Field(default=55_000, description="Ensemble size")
    sample_times:         Optional[tuple[float, ...]] = Field(default=None,  description="Explicit sample times; snapped to the dt grid")
    n_samples:            int                         = Field(default=81,    description="Evenly spaced samples over [0, t_p] when sample_times is unset")
    seed:                 int                         = Field(default=1,     description="64-bit unsigned master seed")
    divergence_threshold: Optional[float]             = Field(default=None,  description="Bound on |α|² per variable; default 1e6·max(N, 1)")
    n_batches:            int                         = Field(default=100,   description="Batches for jackknife error estimation")
    divergence_limit:     float                       = Field(default=0.01,  description="Largest tolerated diverged fraction")
    scheme:               Scheme                      = Field(default=Scheme.EULER, description="Integration scheme")
    tripartite:           bool                        = Field(default=False, description="Also accumulate three-mode moments")
    chi_window:           float                       = Field(default=0.005, description="|χ| beyond this draws a stability warning")
    stability_limit:      float                       = Field(default=50.0,  description="|χ|·N·t_p beyond this draws a stability warning")

    def threshold_for(self, params: ModelParams) -> float:
        if self.divergence_threshold is not None:
            return self.divergence_threshold
        return 1e6 * max(params.n_total, 1)


@dataclass
class SampleGrid:
    """Sample times snapped onto the integrator grid."""
    times:   np.ndarray             # float, strictly increasing
    steps:   np.ndarray             # int, step index of each time
    n_steps: int                    # total steps from 0 to t_p


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings:   list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


# ── COUPLING SCHEDULES ────────────────────────────────────────────────────────

def _pulse_angle(t: float, p: ModelParams) -> float:
    tol = 1e-9 * max(p.t_p, 1.0)
    if not (-tol <= t <= p.t_p + tol):
        raise ValueError(f"t = {t} outside the pulse window [0, {p.t_p}]")
    t = min(max(t, 0.0), p.t_p)
    return math.pi * t / (2.0 * p.t_p)


def coupling_k12(t: float, p: ModelParams) -> float:
    """K12(t) = Ω sin²(πt/2t_p); rises from 0 to Ω."""
    return p.omega * math.sin(_pulse_angle(t, p)) ** 2


def coupling_k23(t: float, p: ModelParams) -> float:
    """K23(t) = Ω cos²(πt/2t_p); falls from Ω to 0."""
    return p.omega * math.cos(_pulse_angle(t, p)) ** 2


def couplings(t: float, p: ModelParams) -> tuple[float, float]:
    angle = _pulse_angle(t, p)
    return p.omega * math.sin(angle) ** 2, p.omega * math.cos(angle) ** 2


# ── GRID ──────────────────────────────────────────────────────────────────────

def steps_for(t_p: float, dt: float) -> int:
    """Number of dt steps covering [0, t_p]; t_p must sit on the grid."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = int(round(t_p / dt))
    if n <= 0 or abs(n * dt - t_p) > 1e-9 * max(t_p, 1.0):
        raise ValueError(f"t_p = {t_p} is not an integer multiple of dt = {dt}")
    return n


def snap_sample_times(times, dt: float, t_p: float) -> SampleGrid:
    """
    Move each sample time to the nearest multiple of dt.
    Snapping further than dt/2, leaving [0, t_p], or collapsing two times onto
    one step are errors.
    """
    n_steps = steps_for(t_p, dt)
    raw     = np.asarray(times, dtype=float)

    if raw.ndim != 1 or raw.size == 0:
        raise ValueError("sample_times must be a non-empty list")

    steps  = np.rint(raw / dt).astype(np.int64)
    offset = np.abs(raw - steps * dt)
    if np.any(offset > 0.5 * dt * (1.0 + 1e-9)):
        bad = raw[offset > 0.5 * dt][0]
        raise ValueError(f"sample time {bad} cannot be snapped to the dt grid")
    if np.any(steps < 0) or np.any(steps > n_steps):
        raise ValueError(f"sample times must lie in [0, {t_p}]")
    if np.any(np.diff(steps) <= 0):
        raise ValueError("sample times must be strictly increasing after snapping to dt")

    return SampleGrid(times=steps * dt, steps=steps, n_steps=n_steps)


def sample_grid(p: ModelParams, s: SimParams) -> SampleGrid:
    if s.sample_times is not None:
        return snap_sample_times(s.sample_times, s.dt, p.t_p)
    if s.n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if s.n_samples == 1:
        return snap_sample_times([p.t_p], s.dt, p.t_p)
    return snap_sample_times(np.linspace(0.0, p.t_p, s.n_samples), s.dt, p.t_p)


# ── VALIDATION ────────────────────────────────────────────────────────────────

def validate(p: ModelParams, s: SimParams) -> ValidationReport:
    """
    Collect every configuration problem instead of stopping at the first.
    Violations make the configuration unusable; warnings flag regimes where
    the positive-P equations are likely to go unstable.
    """
    report = ValidationReport()
    v      = report.violations

    if not p.omega > 0:
        v.append(f"omega must be positive, got {p.omega}")
    if not p.t_p > 0:
        v.append(f"t_p must be positive, got {p.t_p}")
    if p.n_total < 0:
        v.append(f"n_total must be non-negative, got {p.n_total}")
    for name in ("omega", "t_p", "e2", "chi", "initial_phase"):
        if not math.isfinite(getattr(p, name)):
            v.append(f"{name} must be finite")

    if not s.dt > 0:
        v.append(f"dt must be positive, got {s.dt}")
    if s.n_traj <= 0:
        v.append(f"n_traj must be positive, got {s.n_traj}")
    if s.n_batches < 2:
        v.append(f"n_batches must be at least 2 for error estimation, got {s.n_batches}")
    elif s.n_traj > 0 and s.n_traj % s.n_batches != 0:
        v.append(f"n_batches ({s.n_batches}) must divide n_traj ({s.n_traj})")
    if not 0 <= s.seed < 2 ** 64:
        v.append(f"seed must be a 64-bit unsigned integer, got {s.seed}")
    if s.divergence_threshold is not None and not s.divergence_threshold > 0:
        v.append(f"divergence_threshold must be positive, got {s.divergence_threshold}")
    if not 0 <= s.divergence_limit <= 1:
        v.append(f"divergence_limit must be a fraction in [0, 1], got {s.divergence_limit}")

    if p.t_p > 0 and s.dt > 0:
        try:
            sample_grid(p, s)
        except ValueError as e:
            v.append(str(e))

    # Stability heuristics only make sense for an otherwise sane config
    if abs(p.chi) > s.chi_window:
        report.warnings.append(
            f"|chi| = {abs(p.chi):g} is outside the stable window |chi| <= {s.chi_window:g}"
        )
    load = abs(p.chi) * max(p.n_total, 0) * max(p.t_p, 0.0)
    if load > s.stability_limit:
        report.warnings.append(
            f"|chi|·N·t_p = {load:g} exceeds {s.stability_limit:g}; positive-P trajectories may diverge"
        )

    return report
