"""
api/simulate.py
───────────────
FastAPI endpoints for running simulations over HTTP.
Runs are analyzed in-memory only: nothing is written to disk.

Mount in main.py:
    from ctapsteer.api.simulate import router as simulate_router
    app.include_router(simulate_router, prefix="/api/simulate", tags=["simulate"])

Example curl:
    curl -X POST http://localhost:8000/api/simulate/run \\
      -H "Content-Type: application/json" \\
      -d '{"model": {"state_kind": "fock", "n_total": 4}, "sim": {"n_traj": 2000, "n_batches": 20}, "mode": "both"}'

    curl -X POST http://localhost:8000/api/simulate/upload -F "file=@fig3.ini"
"""

import os
import tempfile
from typing import Optional

from fastapi import APIRouter, File, HTTPException, UploadFile
from pydantic import BaseModel, Field

from ctapsteer.simulation.config import ConfigError, RunConfig, check_config, load_config
from ctapsteer.simulation.model import StateKind
from ctapsteer.simulation.observables import frozen_state_xi
from ctapsteer.simulation.pipeline import ExitCode, SimulationPipeline
from ctapsteer.simulation.results import AgreementRow, ResultRow, rows_from_series


router = APIRouter()


def max_trajectories() -> int:
    return int(os.environ.get("CTAPSTEER_API_MAX_TRAJECTORIES", "20000"))


# ── RESPONSE MODELS ───────────────────────────────────────────────────────────

class SimulationResponse(BaseModel):
    success:          bool
    stochastic:       Optional[list[ResultRow]]    = None
    oracle:           Optional[list[ResultRow]]    = None
    n_diverged:       int                          = 0
    agreement:        list[AgreementRow]           = Field(default_factory=list)
    agreement_passed: Optional[bool]               = None
    warnings:         list[str]                    = Field(default_factory=list)
    duration_seconds: float


class FrozenStateResponse(BaseModel):
    kind:    StateKind
    n_total: int
    xi:      float = Field(description="ξ13 = ξ31 for N/2 atoms in each end well")


# ── ENDPOINTS ─────────────────────────────────────────────────────────────────

def _execute(config: RunConfig) -> SimulationResponse:
    try:
        check_config(config)
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=e.violations or str(e))

    limit = max_trajectories()
    if config.runs_stochastic and config.sim.n_traj > limit:
        raise HTTPException(
            status_code=400,
            detail=f"n_traj = {config.sim.n_traj} exceeds this server's limit of {limit}",
        )

    result = SimulationPipeline(verbose=False, dry_run=True).run(config)
    if not result.success:
        status = 422 if result.exit_code == ExitCode.VALIDATION else 500
        raise HTTPException(status_code=status, detail=result.error)

    return SimulationResponse(
        success          = True,
        stochastic       = rows_from_series(result.stochastic) if result.stochastic else None,
        oracle           = rows_from_series(result.oracle) if result.oracle else None,
        n_diverged       = result.n_diverged,
        agreement        = result.agreement,
        agreement_passed = result.agreement_passed,
        warnings         = result.warnings,
        duration_seconds = result.duration_seconds,
    )


@router.post("/run", response_model=SimulationResponse)
async def run_simulation(config: RunConfig):
    """
    Run the stochastic ensemble and/or the exact oracle for a JSON config.
    Returns one row per sample time and, in "both" mode, the agreement report.
    """
    return _execute(config)


@router.post("/upload", response_model=SimulationResponse)
async def run_uploaded_config(file: UploadFile = File(...)):
    """Upload an INI-style config file and run it."""
    tmp_path = None
    try:
        with tempfile.NamedTemporaryFile(delete=False, suffix=".ini") as tmp:
            tmp.write(await file.read())
            tmp_path = tmp.name

        try:
            config = load_config(tmp_path, check=False)
        except ConfigError as e:
            raise HTTPException(status_code=422, detail=str(e))

        return _execute(config)

    finally:
        if tmp_path and os.path.exists(tmp_path):
            os.unlink(tmp_path)


@router.get("/frozen-state", response_model=FrozenStateResponse)
async def frozen_state(kind: StateKind = StateKind.COHERENT, n_total: int = 200):
    """Analytic ξ of the half-transfer state with unchanged number statistics."""
    try:
        xi = frozen_state_xi(kind, n_total)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return FrozenStateResponse(kind=kind, n_total=n_total, xi=xi)
