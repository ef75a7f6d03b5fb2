"""Experiment reports and their JSON / CSV serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from ..exceptions import FieldError

CSV_COLUMNS = ("key", "value", "stderr", "tolerance")


class OutputError(FieldError):
    code = "output-error"
    exit_status = 4


@dataclass
class ExperimentReport:
    command: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int | None = None
    wall_time: float | None = None
    timestamp: str | None = None

    def to_dict(self, include_meta=True) -> dict:
        out = {
            "command": list(self.command),
            "config": self.config,
            "seed": self.seed,
            "results": self.results,
            "residuals": self.residuals,
            "tolerances": self.tolerances,
        }
        if include_meta:
            out["meta"] = {"wall_time": self.wall_time, "timestamp": self.timestamp or _now()}
        return _jsonable(out)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no inf/nan; keep them machine-readable as strings
        return x if math.isfinite(x) else repr(x)
    if hasattr(x, "to_dict"):
        return _jsonable(x.to_dict())
    return x


def _flatten(prefix, x, rows, tolerances):
    if isinstance(x, dict):
        if "estimate" in x and "stderr" in x:
            rows.append((prefix, x["estimate"], x["stderr"], tolerances.get(prefix, "")))
            return
        for k, v in x.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows, tolerances)
    elif isinstance(x, list):
        for k, v in enumerate(x):
            _flatten(f"{prefix}[{k}]", v, rows, tolerances)
    else:
        rows.append((prefix, x, "", tolerances.get(prefix, "")))


def report_rows(report: ExperimentReport):
    """One ``(key, value, stderr, tolerance)`` row per scalar result."""
    d = report.to_dict(include_meta=False)
    rows = []
    _flatten("", d["results"], rows, d["tolerances"])
    return rows


def render(report: ExperimentReport, fmt="json", include_meta=True) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(include_meta), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in report_rows(report):
            w.writerow(["" if v is None else (json.dumps(v) if isinstance(v, bool) else v) for v in row])
        return buf.getvalue()
    raise OutputError(f"unknown output format {fmt!r}; expected json or csv")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    except OSError as exc:
        raise OutputError(f"cannot write to {path}: {exc}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise OutputError(f"cannot write to {path}: {exc}") from None


def emit_results(report: ExperimentReport, fmt="json", out_path=None, include_meta=True, stream=None) -> str:
    text = render(report, fmt, include_meta)
    if out_path is None:
        import sys

        (stream or sys.stdout).write(text)
    else:
        atomic_write(out_path, text)
    return text
