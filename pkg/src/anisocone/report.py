"""Structured verification records with deterministic CSV and JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in np.ravel(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


@dataclass
class VerificationReport:
    """One named check: a list of rows plus an overall verdict.

    Each row is a flat mapping; the standard pointwise columns are
    check, point, h, residual, tolerance, pass.  Chain reports use
    link, lhs, rhs, slack, tolerance, pass.
    """

    check: str
    rows: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, **row) -> None:
        row.setdefault("check", self.check)
        self.rows.append(row)

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(bool(r.get("pass", True)) for r in self.rows)

    def max(self, key: str) -> float:
        vals = [float(r[key]) for r in self.rows if key in r]
        return max(vals) if vals else math.nan

    def columns(self) -> list:
        cols = []
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        cols = self.columns()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in self.rows:
            wr.writerow([_fmt(r[c]) if c in r else "" for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {"check": self.check, "pass": self.passed, "rows": _jsonable(self.rows),
                "info": _jsonable(self.info)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary_line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.check}  ({len(self.rows)} rows)"


def merge(check: str, reports) -> VerificationReport:
    out = VerificationReport(check)
    for rep in reports:
        out.rows.extend(rep.rows)
    return out
