"""JSON and CSV serialization of results.

Every document carries ``schema_version``. CSV files start with a single
``#`` line holding the JSON-encoded header, then a column row. Floats are
written with ``repr`` so they parse back bit-for-bit.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .control import ControlPolicy, CostBreakdown, OptimizationResult
from .costs import CostParams, control_cost, hospitalization_cost
from .model import COMPARTMENTS, ModelParams, Trajectory
from .scenario import SCHEMA_VERSION

RESULT_COLUMNS = ("t",) + tuple(c.upper() for c in COMPARTMENTS) + (
    "beta", "Re", "control_cost", "hospitalization_cost", "death_cost")


class OutputError(OSError):
    pass


def _clean(value):
    """JSON-safe copy: numpy scalars and arrays become Python values, non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, complex):
        return {"re": _clean(value.real), "im": _clean(value.imag)}
    return value


def _unclean_float(v) -> float:
    return float(v) if isinstance(v, str) else v


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def result_header(result: OptimizationResult, dt: float, end_time_cap: float, seed: Optional[int],
                  **extra) -> dict:
    header = {
        "schema_version": SCHEMA_VERSION,
        "kind": "optimization",
        "dt": dt,
        "mu": result.mu,
        "end_time_cap": end_time_cap,
        "seed": seed,
        "label": result.label,
        "end_time": result.end_time,
        "total_cost": result.total_cost,
        "cost_per_person": result.cost_per_person,
        "sigma": result.sigma,
        "converged": result.converged,
        "capped": result.capped,
    }
    header.update(extra)
    return header


def result_to_dict(result: OptimizationResult, header: dict) -> dict:
    return _clean({
        "header": header,
        "model": result.model.to_dict(),
        "cost": result.cost.to_dict(),
        "cost_breakdown": asdict(result.cost_breakdown),
        "iterations": result.iterations,
        "hamiltonian_end": result.hamiltonian_end,
        "beta": result.policy.beta,
        "states": result.trajectory.states,
        "effective_reproduction": result.effective_reproduction,
    })


def result_from_dict(data: dict) -> OptimizationResult:
    """Rebuild an :class:`OptimizationResult` written by :func:`result_to_dict`."""
    h = data["header"]
    dt = float(h["dt"])
    model = ModelParams(**data["model"])
    return OptimizationResult(
        policy=ControlPolicy(np.asarray(data["beta"], dtype=np.float64), dt),
        trajectory=Trajectory(np.asarray(data["states"], dtype=np.float64).reshape(-1, 6), dt),
        total_cost=float(h["total_cost"]),
        cost_breakdown=CostBreakdown(**{k: _unclean_float(v) for k, v in data["cost_breakdown"].items()}),
        end_time=float(h["end_time"]),
        sigma=float(h["sigma"]),
        converged=bool(h["converged"]),
        label=h["label"],
        model=model,
        cost=CostParams(**data["cost"]),
        mu=float(h["mu"]),
        capped=bool(h["capped"]),
        iterations=int(data["iterations"]),
        hamiltonian_end=_unclean_float(data["hamiltonian_end"]),
    )


def result_rows(result: OptimizationResult) -> list[list]:
    """Per-step table: states at every grid time, beta and R_e on the step that starts there,
    and cumulative control, hospitalization and death costs."""
    x = result.trajectory.states
    beta = result.policy.beta
    dt = result.policy.dt
    n = result.model.n_pop
    ctrl = np.concatenate([[0.0], np.cumsum(dt * np.asarray(control_cost(beta, result.cost, n)))])
    hosp = np.concatenate([[0.0], np.cumsum(dt * np.asarray(hospitalization_cost(x[:-1, 3], result.cost, n)))])
    death = result.cost.d * x[:, 5]
    re = np.append(result.effective_reproduction, np.nan)
    beta_col = np.append(beta, np.nan)
    t = result.trajectory.times
    return [[t[k], *x[k], beta_col[k], re[k], ctrl[k], hosp[k], death[k]] for k in range(x.shape[0])]


def write_csv(path, header: dict, columns, rows) -> None:
    buf = _io.StringIO()
    buf.write("# " + json.dumps(_clean(header), sort_keys=False) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _write_text(path, buf.getvalue())


def write_json(path, document: dict) -> None:
    _write_text(path, json.dumps(_clean(document), indent=2) + "\n")


def _write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """``(header, columns, rows)`` of a CSV written by :func:`write_csv`; cells stay strings."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    first, _, rest = text.partition("\n")
    if not first.startswith("# "):
        raise ValueError(f"{path}: missing '#' metadata line")
    header = json.loads(first[2:])
    reader = csv.reader(_io.StringIO(rest))
    columns = next(reader)
    return header, columns, [row for row in reader]


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc


def parse_cell(text: str) -> Any:
    if text == "":
        return float("nan")
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def emit(obj, fmt: str, path, header: dict, columns=None, rows=None, document: Optional[dict] = None) -> None:
    """Write ``obj`` as JSON (``document``, or the full result) or as CSV (``columns``/``rows``).

    An :class:`OptimizationResult` needs only ``header``; other outputs pass
    their own ``document`` and table.
    """
    header = {"schema_version": SCHEMA_VERSION, **header}
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(obj, OptimizationResult):
        if fmt == "json":
            write_json(path, result_to_dict(obj, header))
        else:
            write_csv(path, header, RESULT_COLUMNS, result_rows(obj))
        return
    if fmt == "json":
        write_json(path, {"header": header, **(document or {})})
    else:
        if columns is None:
            raise ValueError("CSV output needs columns and rows")
        write_csv(path, header, columns, rows)
