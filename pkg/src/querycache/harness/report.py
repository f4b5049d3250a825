"""Report files.

Every file except ``timings.json`` is a pure function of the report object,
so two runs with one (seed, config, policy) triple emit identical bytes.
Wall-clock measurements live in ``timings.json`` on their own.

Files written by :func:`emit_report`:

``metrics.json``
    ``schema_version``, ``config`` (model, engine, policy, workload),
    ``mean_recall``, ``cache_stats`` and one entry per repetition.
``heatmap.csv``
    header ``step,<block ids>``, then one row per decode step of the first
    repetition; a cell counts the layers that selected that block.
    Further repetitions go to ``heatmap-<i>.csv``.
``trace.jsonl``
    selection records as written by the engine plus a ``repetition`` field.
``timings.json``
    per-repetition seconds spent on pinned segments, prefill and decode.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .experiment import RunReport

__all__ = ["REPORT_SCHEMA_VERSION", "emit_report", "emit_table", "write_json", "heatmap_csv"]

REPORT_SCHEMA_VERSION = 1


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc}") from exc


def write_json(path, obj) -> None:
    _write(Path(path), _dumps({"schema_version": REPORT_SCHEMA_VERSION, **obj}))


def heatmap_csv(matrix: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", *range(matrix.shape[1])])
    for step, row in enumerate(matrix):
        w.writerow([step, *row.tolist()])
    return buf.getvalue()


def emit_report(report: RunReport, out_dir) -> list[Path]:
    """Write metrics, heatmap(s), trace and timings; returns the written paths."""
    out = _out_dir(out_dir)
    written = []
    metrics = out / "metrics.json"
    write_json(metrics, report.metrics())
    written.append(metrics)
    for i, rep in enumerate(report.repetitions):
        path = out / ("heatmap.csv" if i == 0 else f"heatmap-{i}.csv")
        _write(path, heatmap_csv(rep.heatmap))
        written.append(path)
    lines = []
    for i, rep in enumerate(report.repetitions):
        for rec in rep.trace:
            lines.append(json.dumps({**rec.to_json(), "repetition": i}, sort_keys=True))
    trace = out / "trace.jsonl"
    _write(trace, "".join(line + "\n" for line in lines))
    written.append(trace)
    timings = out / "timings.json"
    write_json(timings, report.timings())
    written.append(timings)
    return written


def emit_table(rows: list[dict], out_dir, stem: str, meta: dict | None = None) -> list[Path]:
    """A tidy table as ``<stem>.json`` plus ``<stem>.csv``."""
    out = _out_dir(out_dir)
    js = out / f"{stem}.json"
    write_json(js, {**(meta or {}), "rows": rows})
    buf = io.StringIO()
    if rows:
        fields = list(rows[0])
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in row.items()})
    cs = out / f"{stem}.csv"
    _write(cs, buf.getvalue())
    return [js, cs]
