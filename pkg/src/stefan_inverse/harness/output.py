"""CSV and JSON emission.

Numbers are written with ``repr(float(x))``, the shortest decimal string
that reads back to the same binary64 value, so identical results give
identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .experiments import ExperimentReport

__all__ = ["format_number", "write_csv", "write_json", "emit", "emit_validation"]

RECOVERED_FILES = {"R": "r_recovered.csv", "q": "q_recovered.csv", "P": "p_recovered.csv"}


def format_number(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_number(v) for v in row])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _columns(report: ExperimentReport, value_key: str, ref_key: str):
    s = report.series
    t = s["t"]
    cols = [t, s[value_key]]
    header = ["t", "value"]
    if ref_key in s:
        ref = np.asarray(s[ref_key], dtype=float)
        cols += [ref, np.abs(np.asarray(s[value_key]) - ref)]
        header += ["reference", "abs_error"]
    return header, zip(*cols)


def emit(report: ExperimentReport, out_dir, extra: dict | None = None) -> list:
    """Write the CSV files for ``report`` plus ``report.json``; returns the paths."""
    out = Path(out_dir)
    paths = []
    kind = report.kind
    if kind == "round-trip":
        header, rows = _columns(report, "value", "reference")
        paths.append(write_csv(out / RECOVERED_FILES[report.target], header, rows))
        if report.target == "P" and "R" in report.series:
            header, rows = _columns(report, "R", "R_reference")
            paths.append(write_csv(out / RECOVERED_FILES["R"], header, rows))
    elif kind == "forward-only":
        s = report.series
        names = [n for n in ("nu", "u_xi_1", "q") if n in s]
        paths.append(write_csv(out / "trace.csv", ["t"] + names, zip(s["t"], *(s[n] for n in names))))
        xi = report.diagnostics["field_xi"]
        F = s["field"]
        rows = ((t, x, F[i, j]) for j, t in enumerate(s["t"]) for i, x in enumerate(xi))
        paths.append(write_csv(out / "field.csv", ["t", "xi", "U"], rows))
    elif kind == "convergence":
        rows = ((r["level"], r["h"], r["error"], r["order"]) for r in report.rows)
        paths.append(write_csv(out / "convergence.csv", ["level", "h", "error", "order"], rows))
    elif kind == "stability":
        rows = ((r["trial"], r["lhs"], r["rhs"], r["verdict"]) for r in report.rows)
        paths.append(write_csv(out / "stability.csv", ["trial", "lhs", "rhs", "verdict"], rows))
    elif kind == "max-principle":
        rows = ((r["trial"], r["grid_min"], r["bound"], r["verdict"]) for r in report.rows)
        paths.append(write_csv(out / "max_principle.csv", ["trial", "grid_min", "bound", "verdict"], rows))
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    paths.append(write_json(out / "report.json", payload))
    return paths


def emit_validation(report, out_dir) -> list:
    """``validation.csv`` (one row per clause) and ``validation.json``."""
    out = Path(out_dir)
    rows = ((c.tag, "n/a" if c.passed is None else ("pass" if c.passed else "fail"), c.detail)
            for c in report.clauses)
    return [
        write_csv(out / "validation.csv", ["clause", "verdict", "detail"], rows),
        write_json(out / "validation.json", report.to_dict()),
    ]
