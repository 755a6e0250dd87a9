"""Readers and writers for the on-disk formats.

data        CSV, header row, optional leading timestamp column, 0/1 cells
trace       JSON lines, one object per stream step
snapshots   <trace>.snapshots.json, nested arrays of V^{t-1} and its loss gradient
curves      CSV t,C_t,Chat_t,Regret_t plus a JSON sidecar of scalars
models      JSON documents for batch fits and stream runs
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .batch import BatchFitReport
from .model import BinaryMatrix, DomainError, FactorModel, Hyperparams, StepSchedule
from .stream import SCALAR_FIELDS, StreamTrace, TraceRecord

TIMESTAMP_NAMES = {"t", "ts", "time", "timestamp", "date", "datetime", "index"}


class InputError(DomainError):
    pass


def _parse_cell(cell: str):
    s = cell.strip()
    if s in ("0", "1"):
        return int(s)
    try:
        val = float(s)
    except ValueError:
        return None
    return int(val) if val in (0.0, 1.0) else None


def ingest_csv(path) -> BinaryMatrix:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        has_ts = bool(header) and header[0].strip().lower() in TIMESTAMP_NAMES
        names = header[1:] if has_ts else header
        if not names:
            raise InputError(f"{path}: no binary columns in header")
        width = len(header)
        rows, stamps = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise InputError(f"{path}: line {line_no} has {len(row)} fields, expected {width}")
            cells = row[1:] if has_ts else row
            parsed = []
            for k, cell in enumerate(cells):
                val = _parse_cell(cell)
                if val is None:
                    col = k + (2 if has_ts else 1)
                    raise InputError(
                        f"{path}: line {line_no}, column {col} ({names[k]!r}): {cell!r} is not 0 or 1"
                    )
                parsed.append(val)
            rows.append(parsed)
            if has_ts:
                stamps.append(row[0])
    if not rows:
        raise InputError(f"{path}: no data rows (N = 0 cannot be fitted)")
    return BinaryMatrix(np.array(rows, dtype=np.int8), stamps if has_ts else None, [n.strip() for n in names])


def write_csv(data: BinaryMatrix, path) -> None:
    path = Path(path)
    cols = list(data.columns) if data.columns is not None else [f"x{j + 1}" for j in range(data.p)]
    stamps = data.timestamps if data.timestamps is not None else [str(i + 1) for i in range(data.n)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + cols)
        for ts, row in zip(stamps, data.values):
            w.writerow([ts] + [int(v) for v in row])


_INT_FIELDS = ("t", "newton_iterations", "converged")


def _record_json(rec: TraceRecord) -> dict:
    out = {name: float(getattr(rec, name)) for name in SCALAR_FIELDS if name not in _INT_FIELDS}
    out["t"] = int(rec.t)
    out["newton_iterations"] = int(rec.newton_iterations)
    out["converged"] = bool(rec.converged)
    out["score"] = [float(v) for v in rec.score]
    return out


def snapshot_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".snapshots.json")


def emit_trace(trace: StreamTrace, path) -> None:
    path = Path(path)
    try:
        with path.open("w") as fh:
            for rec in trace.records:
                fh.write(json.dumps(_record_json(rec)) + "\n")
        snap = snapshot_path(path)
        if trace.has_snapshots:
            doc = {
                "anchor_loadings": [r.anchor_loadings.tolist() for r in trace.records],
                "anchor_gradients": [r.anchor_gradient.tolist() for r in trace.records],
            }
            snap.write_text(json.dumps(doc))
        elif snap.exists():
            snap.unlink()
    except OSError as exc:
        raise OSError(f"could not write trace to {path}: {exc}") from exc


def load_trace(path, initial_loadings) -> StreamTrace:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"trace file not found: {path}")
    snap = snapshot_path(path)
    anchors = grads = None
    if snap.is_file():
        doc = json.loads(snap.read_text())
        anchors, grads = doc["anchor_loadings"], doc["anchor_gradients"]
    records = []
    with path.open() as fh:
        for k, line in enumerate(fh):
            if not line.strip():
                continue
            obj = json.loads(line)
            kwargs = {name: obj[name] for name in SCALAR_FIELDS}
            kwargs["score"] = np.array(obj["score"], dtype=float)
            if anchors is not None:
                kwargs["anchor_loadings"] = np.array(anchors[k], dtype=float)
                kwargs["anchor_gradient"] = np.array(grads[k], dtype=float)
            records.append(TraceRecord(**kwargs))
    return StreamTrace(np.asarray(initial_loadings, dtype=float), records)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{float(x):.17g}"


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def emit_curves(report, path, extra: dict | None = None) -> None:
    """Write the prefix curves as CSV and the scalar functionals as a JSON sidecar."""
    path = Path(path)
    curves = report.prefix_curves
    if curves is None:
        raise DomainError("report has no prefix curves to emit")
    n = len(curves["t"])
    c_t = curves.get("C_t")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "C_t", "Chat_t", "Regret_t"])
        for k in range(n):
            w.writerow([int(curves["t"][k]), _fmt(None if c_t is None else c_t[k]),
                        _fmt(curves["Chat_t"][k]), _fmt(curves["Regret_t"][k])])
    scalars = report.scalars()
    if extra:
        scalars.update(extra)
    sidecar_path(path).write_text(json.dumps(scalars, indent=2) + "\n")


def load_curves(path) -> dict:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("t", "C_t", "Chat_t", "Regret_t")}


def _params_json(params: Hyperparams) -> dict:
    return {k: float(v) for k, v in vars(params).items()}


def save_batch(report: BatchFitReport, path) -> None:
    doc = {
        "kind": "batch",
        "rank": report.model.rank,
        "scores": report.model.scores.tolist(),
        "loadings": report.model.loadings.tolist(),
        "objective_history": [float(v) for v in report.objective_history],
        "batch_loss": float(report.batch_loss),
        "alternations": int(report.alternations),
        "converged": bool(report.converged),
        "row_residual": float(report.row_residual),
        "solver_converged": bool(report.solver_converged),
        "hyperparams": _params_json(report.hyperparams),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_batch(path) -> BatchFitReport:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"batch fit not found: {path}; run fit-batch first")
    doc = json.loads(path.read_text())
    return BatchFitReport(
        model=FactorModel(np.array(doc["scores"]), np.array(doc["loadings"])),
        objective_history=doc["objective_history"],
        batch_loss=doc["batch_loss"],
        alternations=doc["alternations"],
        converged=doc["converged"],
        row_residual=doc["row_residual"],
        solver_converged=doc["solver_converged"],
        hyperparams=Hyperparams(**doc["hyperparams"]),
    )


def save_stream(path, initial_loadings, final_loadings, schedule: StepSchedule, params: Hyperparams,
                seed: int, snapshots: bool) -> None:
    doc = {
        "kind": "stream",
        "initial_loadings": np.asarray(initial_loadings).tolist(),
        "final_loadings": np.asarray(final_loadings).tolist(),
        "schedule": {"kind": schedule.kind.value, "constant": float(schedule.constant)},
        "hyperparams": _params_json(params),
        "seed": int(seed),
        "snapshots": bool(snapshots),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_stream(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"stream run not found: {path}; run fit-stream first")
    doc = json.loads(path.read_text())
    return {
        "initial_loadings": np.array(doc["initial_loadings"], dtype=float),
        "final_loadings": np.array(doc["final_loadings"], dtype=float),
        "schedule": StepSchedule(doc["schedule"]["kind"], doc["schedule"]["constant"]),
        "params": Hyperparams(**doc["hyperparams"]),
        "seed": doc["seed"],
        "snapshots": doc["snapshots"],
    }
