"""Matrix and function files, run reports.

Matrix files are JSON: a list of rows, each row a list of ``[re, im]``
pairs (row-major).  Reports are UTF-8 JSON or RFC-4180 CSV.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import HermitianMatrix

__all__ = [
    "MatrixParseError",
    "matrix_to_json",
    "matrix_from_json",
    "load_matrix",
    "load_complex_matrix",
    "save_matrix",
    "RunReport",
    "config_hash",
    "emit_report",
    "write_csv",
    "jsonable",
]


class MatrixParseError(ValueError):
    def __init__(self, where, message):
        self.where = where
        super().__init__(f"{where}: {message}")


def matrix_to_json(a):
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def matrix_from_json(obj, where="<matrix>"):
    if not isinstance(obj, list):
        raise MatrixParseError(where, "expected a list of rows")
    if not obj:
        raise MatrixParseError(where, "empty matrix (dimension must be at least 1)")
    d = len(obj)
    out = np.empty((d, d), dtype=complex)
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != d:
            raise MatrixParseError(f"{where}[{i}]", f"expected a row of {d} entries")
        for j, z in enumerate(row):
            ok = (
                isinstance(z, list)
                and len(z) == 2
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in z)
            )
            if not ok:
                raise MatrixParseError(f"{where}[{i}][{j}]", f"expected [re, im], got {z!r}")
            out[i, j] = complex(z[0], z[1])
    return out


def _read_json(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MatrixParseError(str(path), exc.strerror or str(exc)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MatrixParseError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc


def load_complex_matrix(path):
    return matrix_from_json(_read_json(path), str(path))


def load_matrix(path):
    """Hermitian matrix from a JSON file; hermiticity is validated."""
    return HermitianMatrix(load_complex_matrix(path))


def save_matrix(a, path):
    Path(path).write_text(json.dumps(matrix_to_json(a)) + "\n", encoding="utf-8")


def jsonable(obj):
    """Recursively convert numpy and complex values to JSON-friendly types.

    Complex numbers become ``[re, im]``; non-finite floats become strings.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(float(obj.real)), jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def config_hash(config):
    """Git-style blob hash of the canonical JSON form of ``config``."""
    data = json.dumps(jsonable(config), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class RunReport:
    """Outcome of one CLI run.

    ``timings`` are kept apart from the hashed, reproducible content and are
    written to their own file.
    """

    command: str
    config: dict
    outputs: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        return config_hash({"command": self.command, **self.config})

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    def check(self, name, value, limit, kind="max"):
        """Record ``value <= limit`` (``kind="max"``) or ``value >= limit``."""
        ok = bool(value <= limit) if kind == "max" else bool(value >= limit)
        self.checks.append({"name": name, "value": value, "limit": limit,
                            "kind": kind, "passed": ok})
        return ok

    def to_json(self):
        return jsonable({
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "passed": self.passed,
            "checks": self.checks,
            "outputs": self.outputs,
            "tables": self.tables,
        })

    def content_hash(self):
        data = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(data).hexdigest()


def write_csv(rows, path):
    rows = [jsonable(r) for r in rows]
    path = Path(path)
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\r\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, list) else v) for k, v in r.items()})


def emit_report(report, path):
    """Write ``report`` as JSON (``.json``) or its tables as CSV (``.csv``)."""
    path = Path(path)
    if path.suffix == ".csv":
        rows = []
        for name, table in report.tables.items():
            rows.extend({"table": name, **row} for row in table)
        write_csv(rows, path)
        return
    text = json.dumps(report.to_json(), indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
