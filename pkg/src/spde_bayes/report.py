"""Study reports: per-replicate rows, per-lambda aggregates, fitted slopes, atomic emission."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import StudyConfig, config_hash, config_to_dict

AGG_QUANTILES = (0.1, 0.5, 0.9)


@dataclass
class StudyReport:
    kind: str
    columns: list
    rows: list  # list of tuples, first two entries (lam, replicate)
    aggregates: dict = field(default_factory=dict)  # lam (as str) -> column -> stats
    fits: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # extra CSVs: name -> (columns, rows)

    def column(self, name: str, lam: float | None = None) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows if lam is None or r[0] == lam], dtype=float)

    @property
    def lambdas(self) -> list:
        return sorted({r[0] for r in self.rows})

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "aggregates": self.aggregates,
            "fits": self.fits,
            "statistics": self.statistics,
            "provenance": self.provenance,
        }


def aggregate_rows(columns, rows, stat_columns) -> dict:
    """Per-lambda mean, sd, min, max and quantiles for each statistic column."""
    out = {}
    lams = sorted({r[0] for r in rows})
    for lam in lams:
        sub = [r for r in rows if r[0] == lam]
        entry = {"n": len(sub)}
        for name in stat_columns:
            j = columns.index(name)
            v = np.array([r[j] for r in sub], dtype=float)
            entry[name] = {
                "mean": float(v.mean()),
                "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                "min": float(v.min()),
                "max": float(v.max()),
                **{f"q{int(round(100 * q))}": float(np.quantile(v, q)) for q in AGG_QUANTILES},
            }
        out[repr(float(lam))] = entry
    return out


def provenance(cfg: StudyConfig) -> dict:
    d = config_to_dict(cfg)
    d.pop("out_dir")
    return {"config_hash": config_hash(cfg), "seed": cfg.seed, "code_version": __version__, "config": d}


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def atomic_write(dest: Path, text: str):
    dest = Path(dest)
    fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=dest.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, dest)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def emit_report(report: StudyReport, out_dir) -> list[Path]:
    """Write ``<kind>_rows.csv``, extra tables and ``<kind>_summary.json``; each file atomically."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    written = []
    p = out / f"{report.kind}_rows.csv"
    atomic_write(p, _csv_text(report.columns, report.rows))
    written.append(p)
    for name, (cols, rows) in sorted(report.tables.items()):
        p = out / f"{name}.csv"
        atomic_write(p, _csv_text(cols, rows))
        written.append(p)
    p = out / f"{report.kind}_summary.json"
    atomic_write(p, json.dumps(_jsonable(report.summary()), indent=2, sort_keys=True) + "\n")
    written.append(p)
    return written
