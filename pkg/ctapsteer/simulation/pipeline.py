"""
pipeline.py
───────────
Orchestrates a run: validate → stochastic ensemble → exact oracle → write.

USAGE:
    from ctapsteer.simulation.config import load_config
    from ctapsteer.simulation.pipeline import SimulationPipeline

    pipeline = SimulationPipeline(workers=8)
    result   = pipeline.run(load_config("fig3.ini"))

    print(result.exit_code)      # 0 on success
    print(result.files)          # series files, manifest, agreement report
    print(result.warnings)       # stability warnings, convergence notes
"""

import itertools
import time
import traceback
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import ctapsteer

from .config import ConfigError, RunConfig, check_config, render_config
from .model import sample_grid
from .observables import WitnessSeries, cavalcanti_estimate, hermiticity_report
from .oracle import OracleCapError, evolve, initial_state
from .results import AgreementRow, agreement_report, write_agreement, write_manifest, write_series
from .sde import DivergenceLimitError, EmptyEnsembleError, EnsembleResult, convergence_check, run_ensemble


class ExitCode(IntEnum):
    OK         = 0
    FAILURE    = 1
    VALIDATION = 2
    DIVERGENCE = 3
    IO         = 4


# ── RESULT SCHEMA ─────────────────────────────────────────────────────────────

@dataclass
class SimulationResult:
    success:          bool
    exit_code:        ExitCode                  = ExitCode.OK
    stochastic:       Optional[WitnessSeries]   = None
    oracle:           Optional[WitnessSeries]   = None
    agreement:        list[AgreementRow]        = field(default_factory=list)
    n_diverged:       int                       = 0
    files:            list[str]                 = field(default_factory=list)
    warnings:         list[str]                 = field(default_factory=list)
    error:            str                       = ""
    duration_seconds: float                     = 0.0

    @property
    def agreement_passed(self) -> Optional[bool]:
        if not self.agreement:
            return None
        return all(row.passed for row in self.agreement)


# ── PIPELINE ──────────────────────────────────────────────────────────────────

class SimulationPipeline:

    def __init__(
        self,
        workers:  Optional[int] = None,
        verbose:  bool = True,
        dry_run:  bool = False,
    ):
        self.workers = workers
        self.verbose = verbose
        self.dry_run = dry_run

    def _say(self, message: str):
        if self.verbose:
            print(message)

    def run(self, config: RunConfig) -> SimulationResult:
        start_time = time.time()

        try:
            return self._run(config, start_time)
        except (ConfigError, EmptyEnsembleError, OracleCapError) as e:
            return self._failed(ExitCode.VALIDATION, e, start_time)
        except DivergenceLimitError as e:
            result = self._failed(ExitCode.DIVERGENCE, e, start_time)
            result.n_diverged = e.result.divergence.n_diverged
            if not self.dry_run:
                try:
                    result.files.append(self._write_manifest(config, result, e.result))
                except OSError:
                    pass
            return result
        except OSError as e:
            return self._failed(ExitCode.IO, e, start_time)
        except Exception as e:
            if self.verbose:
                traceback.print_exc()
            return self._failed(ExitCode.FAILURE, e, start_time)

    def _failed(self, code: ExitCode, error: Exception, start_time: float) -> SimulationResult:
        self._say(f"  ✗ {error}")
        return SimulationResult(
            success          = False,
            exit_code        = code,
            error            = str(error),
            duration_seconds = time.time() - start_time,
        )

    def _run(self, config: RunConfig, start_time: float) -> SimulationResult:
        result = SimulationResult(success=True)
        p, s   = config.model, config.sim

        # ── STEP 1: VALIDATE ──────────────────────────────────────────────────
        self._say("[1/4] Validating configuration...")
        result.warnings.extend(check_config(config))
        grid = sample_grid(p, s)
        self._say(f"      → {p.state_kind.value} input, N = {p.n_total}, χ = {p.chi:g}, "
                  f"{len(grid.times)} sample times, {grid.n_steps:,} steps of {s.dt:g}")
        for warning in result.warnings:
            self._say(f"      ⚠ {warning}")

        # ── STEP 2: STOCHASTIC ENSEMBLE ───────────────────────────────────────
        ensemble = None
        if config.runs_stochastic:
            self._say(f"[2/4] Integrating {s.n_traj:,} trajectories in {s.n_batches} batches ({s.scheme.value})...")
            ensemble = run_ensemble(p, s, workers=self.workers, progress=self._progress)
            result.stochastic = ensemble.series()
            result.n_diverged = ensemble.divergence.n_diverged
            self._say(f"      → {ensemble.divergence.n_diverged} diverged "
                      f"({ensemble.divergence.fraction:.3%}), {ensemble.duration_seconds:.1f}s")

            if config.check_dt:
                self._say(f"      → Rerunning at dt/2 = {s.dt / 2:g} for the step-size check...")
                report = convergence_check(p, s, workers=self.workers)
                worst  = max(report.max_ratio, key=report.max_ratio.get)
                self._say(f"      → worst change {report.max_ratio[worst]:.2f}σ ({worst})")
                if not report.converged:
                    result.warnings.append(
                        f"halving dt moved {worst} by {report.max_ratio[worst]:.2f} combined errors; reduce dt"
                    )
        else:
            self._say("[2/4] Stochastic ensemble skipped (oracle mode)")

        # ── STEP 3: EXACT ORACLE ──────────────────────────────────────────────
        if config.runs_oracle:
            self._say(f"[3/4] Exact evolution for N = {p.n_total}...")
            state         = initial_state(p, config.oracle)
            result.oracle = evolve(state, p, grid.times, config.oracle.step, config.oracle.norm_tol, self.workers)
            self._say(f"      → {len(state.sectors)} number sector(s), basis up to "
                      f"{max(sec.basis.size for sec in state.sectors)} states")

            if result.stochastic is not None:
                result.agreement = agreement_report(result.stochastic, result.oracle)
                failed = [row for row in result.agreement if not row.passed]
                self._say(f"      → agreement: {len(result.agreement) - len(failed)}/{len(result.agreement)} within tolerance")
                if failed:
                    result.warnings.append(f"{len(failed)} stochastic values disagree with the exact result")
        else:
            self._say("[3/4] Exact oracle skipped")

        # ── STEP 4: WRITE ─────────────────────────────────────────────────────
        if self.dry_run:
            self._say("[4/4] DRY RUN: nothing written")
        else:
            self._say(f"[4/4] Writing results to {config.output_path}_*...")
            fmt = config.output_format.value
            if result.stochastic is not None:
                result.files.append(write_series(result.stochastic, config.output_path, "stochastic", fmt))
            if result.oracle is not None:
                result.files.append(write_series(result.oracle, config.output_path, "oracle", fmt))
            if result.agreement:
                result.files.append(write_agreement(result.agreement, f"{config.output_path}_agreement.csv"))
            result.files.append(self._write_manifest(config, result, ensemble))
            for path in result.files:
                self._say(f"      → {path}")

        result.duration_seconds = time.time() - start_time
        return result

    def _progress(self, done: int, total: int):
        step = max(total // 10, 1)
        if done % step == 0 or done == total:
            self._say(f"      … batch {done}/{total}")

    def _write_manifest(self, config: RunConfig, result: SimulationResult, ensemble: Optional[EnsembleResult]) -> str:
        manifest = {
            "code_version": ctapsteer.__version__,
            "config":       config.model_dump(mode="json"),
            "config_text":  render_config(config),
            "seed":         config.sim.seed,
            "success":      result.success,
            "warnings":     result.warnings,
        }
        if ensemble is not None:
            manifest["divergence"] = {
                "n_traj":     ensemble.divergence.n_traj,
                "n_diverged": ensemble.divergence.n_diverged,
                "fraction":   ensemble.divergence.fraction,
                "per_batch":  ensemble.divergence.per_batch,
            }
            if ensemble.moments.n_effective > 1:
                manifest["hermiticity"] = hermiticity_report(ensemble.moments)
            if config.sim.tripartite and ensemble.moments.n_effective > 1:
                manifest["three_mode_steering"] = {
                    "".join(map(str, ordering)): {
                        "value": estimate.value,
                        "error": estimate.error,
                    }
                    for ordering in itertools.permutations((1, 2, 3))
                    for estimate in [cavalcanti_estimate(ensemble.moments, ordering)]
                }
        if result.agreement:
            manifest["agreement_passed"] = result.agreement_passed
        return write_manifest(f"{config.output_path}_manifest.json", manifest)
