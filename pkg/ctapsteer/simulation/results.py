"""
results.py
──────────
Serialization of witness series, the run manifest and the stochastic-vs-
exact agreement report.

Series files hold one row per sample time in the fixed ResultRow column
order. Floats are written with Python's shortest round-trip repr, so two
runs with the same configuration give byte-identical files.
"""

import csv
import json
import os
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from .observables import WitnessSeries


class ResultRow(BaseModel):
    time:              float
    n1:                float
    n1_err:            float
    n2:                float
    n2_err:            float
    n3:                float
    n3_err:            float
    xi13:              float
    xi13_err:          float
    xi31:              float
    xi31_err:          float
    hz:                float
    hz_err:            float
    diverged_fraction: float


COLUMNS = tuple(ResultRow.model_fields)


class AgreementRow(BaseModel):
    time:           float
    observable:     str
    stochastic:     float
    stochastic_err: float
    exact:          float
    difference:     float
    tolerance:      float = Field(description="max(σ·combined error, absolute floor)")
    passed:         bool


def rows_from_series(series: WitnessSeries) -> list[ResultRow]:
    rows = []
    for i, t in enumerate(series.times):
        values = {"time": float(t), "diverged_fraction": float(series.diverged_fraction)}
        for name in WitnessSeries.OBSERVABLES:
            values[name]          = float(getattr(series, name)[i])
            values[f"{name}_err"] = float(getattr(series, f"{name}_err")[i])
        rows.append(ResultRow(**values))
    return rows


# ── SERIES FILES ──────────────────────────────────────────────────────────────

def _ensure_dir(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_csv(rows: list[ResultRow], path: str) -> str:
    _ensure_dir(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([repr(getattr(row, column)) for column in COLUMNS])
    return path


def read_csv(path: str) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as f:
        return [ResultRow(**record) for record in csv.DictReader(f)]


def write_json(rows: list[ResultRow], path: str, extra: Optional[dict] = None) -> str:
    _ensure_dir(path)
    payload = {"columns": list(COLUMNS), "rows": [row.model_dump() for row in rows]}
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    return path


def write_series(series: WitnessSeries, stem: str, label: str, fmt: str) -> str:
    """Write `<stem>_<label>.<fmt>`; JSON files also carry the raw moments."""
    rows = rows_from_series(series)
    path = f"{stem}_{label}.{fmt}"
    if fmt == "json":
        moments = {
            "a1dag_a3_re": np.real(series.moments.get("a1dag_a3", [])).tolist(),
            "a1dag_a3_im": np.imag(series.moments.get("a1dag_a3", [])).tolist(),
            "n1n3":        np.asarray(series.moments.get("n1n3", []), dtype=float).tolist(),
            "n_total":     np.asarray(series.moments.get("n_total", []), dtype=float).tolist(),
        }
        return write_json(rows, path, extra={"moments": moments})
    return write_csv(rows, path)


# ── AGREEMENT ─────────────────────────────────────────────────────────────────

def agreement_report(
    stochastic: WitnessSeries,
    exact:      WitnessSeries,
    sigma:      float = 4.0,
    abs_tol:    float = 1e-6,
) -> list[AgreementRow]:
    """Compare every observable at every shared sample time."""
    if len(stochastic.times) != len(exact.times) or not np.allclose(stochastic.times, exact.times):
        raise ValueError("series must share sample times")

    rows = []
    for i, t in enumerate(stochastic.times):
        for name in WitnessSeries.OBSERVABLES:
            value     = float(getattr(stochastic, name)[i])
            error     = float(np.hypot(getattr(stochastic, f"{name}_err")[i], getattr(exact, f"{name}_err")[i]))
            reference = float(getattr(exact, name)[i])
            tolerance = max(sigma * error, abs_tol)
            rows.append(AgreementRow(
                time           = float(t),
                observable     = name,
                stochastic     = value,
                stochastic_err = float(getattr(stochastic, f"{name}_err")[i]),
                exact          = reference,
                difference     = value - reference,
                tolerance      = tolerance,
                passed         = abs(value - reference) <= tolerance,
            ))
    return rows


def write_agreement(rows: list[AgreementRow], path: str) -> str:
    _ensure_dir(path)
    columns = tuple(AgreementRow.model_fields)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([
                repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v
                for v in (getattr(row, c) for c in columns)
            ])
    return path


# ── MANIFEST ──────────────────────────────────────────────────────────────────

def write_manifest(path: str, manifest: dict) -> str:
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")
    return path


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
