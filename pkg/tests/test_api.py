import asyncio
import io
import os
import sys

# Resolve project root so ctapsteer package is importable regardless of CWD
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

import pytest
from fastapi import HTTPException, UploadFile

from ctapsteer.api.simulate import frozen_state, run_simulation, run_uploaded_config
from ctapsteer.simulation.config import RunConfig, RunMode
from ctapsteer.simulation.model import ModelParams, SimParams, StateKind


SMALL = RunConfig(
    model = ModelParams(omega=2.0, t_p=1.0, chi=1e-2, n_total=2, state_kind=StateKind.FOCK),
    sim   = SimParams(dt=0.01, n_traj=200, n_batches=10, n_samples=3),
    mode  = RunMode.BOTH,
)


def test_run_returns_rows_and_agreement():
    response = asyncio.run(run_simulation(SMALL))
    assert response.success
    assert len(response.stochastic) == 3 and len(response.oracle) == 3
    assert response.oracle[0].xi13 == -1.0
    assert len(response.agreement) == 3 * 6
    assert response.agreement_passed is not None


def test_trajectory_limit():
    os.environ["CTAPSTEER_API_MAX_TRAJECTORIES"] = "100"
    try:
        with pytest.raises(HTTPException) as info:
            asyncio.run(run_simulation(SMALL))
        assert info.value.status_code == 400
    finally:
        del os.environ["CTAPSTEER_API_MAX_TRAJECTORIES"]


def test_invalid_config_is_422():
    bad = SMALL.model_copy(update={"sim": SMALL.sim.model_copy(update={"n_batches": 7})})
    with pytest.raises(HTTPException) as info:
        asyncio.run(run_simulation(bad))
    assert info.value.status_code == 422


def test_upload_config_file():
    text = b"[model]\nstate_kind = fock\nn_total = 2\nt_p = 1\nomega = 2\n\n[sim]\ndt = 0.01\nn_traj = 100\nn_batches = 10\nn_samples = 3\n\n[run]\nmode = oracle\n"
    response = asyncio.run(run_uploaded_config(UploadFile(file=io.BytesIO(text), filename="run.ini")))
    assert response.stochastic is None
    assert len(response.oracle) == 3


def test_upload_bad_file_is_422():
    upload = UploadFile(file=io.BytesIO(b"[model]\nchi = abc\n"), filename="bad.ini")
    with pytest.raises(HTTPException) as info:
        asyncio.run(run_uploaded_config(upload))
    assert info.value.status_code == 422
    assert "chi" in info.value.detail


def test_upload_non_utf8_file_is_422():
    upload = UploadFile(file=io.BytesIO(b"[model]\nchi = 1e-4 # \xff\xfe\n"), filename="latin1.ini")
    with pytest.raises(HTTPException) as info:
        asyncio.run(run_uploaded_config(upload))
    assert info.value.status_code == 422
    assert "line 2" in info.value.detail


def test_frozen_state_endpoint():
    response = asyncio.run(frozen_state(kind=StateKind.FOCK, n_total=200))
    assert response.xi == -10050.0
    with pytest.raises(HTTPException) as info:
        asyncio.run(frozen_state(kind=StateKind.FOCK, n_total=3))
    assert info.value.status_code == 422


def test_app_mounts_simulation_routes():
    from main import app, root
    paths = {route.path for route in app.routes}
    assert {"/", "/api/simulate/run", "/api/simulate/upload", "/api/simulate/frozen-state"} <= paths
    assert asyncio.run(root())["status"] == "running"


if __name__ == "__main__":
    test_run_returns_rows_and_agreement()
    test_trajectory_limit()
    test_invalid_config_is_422()
    test_upload_config_file()
    test_upload_bad_file_is_422()
    test_upload_non_utf8_file_is_422()
    test_frozen_state_endpoint()
    test_app_mounts_simulation_routes()
    print("test_api: all passed")
