"""Offline audit of a run record: every inline invariant, re-checked from the CSV alone."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .runner import SCHEMA

BUDGET_TOL = 1e-9
FLOOR_TOL = 1e-6
FAIR_TOL = 1e-9
UNIFORM_BOUND = 2.0
ZETA_FLOOR = -math.pi ** 2 / 6
XI_FLOOR = -math.pi ** 4 / 36


@dataclass
class Check:
    name: str
    passed: bool
    first_violation: int | None = None
    detail: str = ""

    def line(self) -> str:
        where = "" if self.first_violation is None else f" (first violation at step {self.first_violation})"
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}{where} {self.detail}".rstrip()


@dataclass
class AuditReport:
    checks: list
    flagged_fraction: float
    max_flagged_fraction: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def flags_exceeded(self) -> bool:
        return self.flagged_fraction > self.max_flagged_fraction

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "flagged_fraction": self.flagged_fraction,
            "max_flagged_fraction": self.max_flagged_fraction,
            "checks": [c.__dict__ for c in self.checks],
        }


def read_record(path: str | Path) -> tuple[list[str], dict[str, list[str]]]:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# schema={SCHEMA}":
            raise ValueError(f"{path}: unsupported record schema line {first!r}")
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {h: [] for h in header}
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"{path}: malformed row {row[:2]}")
            for h, v in zip(header, row):
                cols[h].append(v)
    return header, cols


def _num(cols, name) -> np.ndarray:
    return np.array([float(v) for v in cols[name]])


def _check(name, bad_mask, steps, detail="") -> Check:
    bad = np.flatnonzero(bad_mask)
    return Check(name, not len(bad), int(steps[bad[0]]) if len(bad) else None, detail)


def audit_columns(header, cols, max_flagged_fraction=0.01, min_play_fraction=0.9) -> AuditReport:
    steps = _num(cols, "n").astype(int)
    checks = [Check("row-index", bool(np.array_equal(steps, np.arange(len(steps)))),
                    detail=f"{len(steps)} rows")]
    members = sorted({int(h[1:].split("_")[0]) for h in header if h.startswith("g") and h.endswith("_pg_svm")})

    margins = [_num(cols, f"g{i}_budget_margin") for i in members]
    if margins:
        worst = np.min(margins, axis=0)
        checks.append(_check("budget-floor", worst < -BUDGET_TOL, steps, f"min margin {worst.min():.3g}"))
        zeta = np.min([_num(cols, f"g{i}_zeta_svm") for i in members], axis=0)
        checks.append(_check("zeta-floor", zeta < ZETA_FLOOR - FLOOR_TOL, steps, f"min SVM {zeta.min():.3g}"))
        span = np.max([_num(cols, f"g{i}_pg_svx") - _num(cols, f"g{i}_pg_svm") for i in members], axis=0)
        checks.append(_check("pg-uncertainty", span > 2 * UNIFORM_BOUND + 1 + BUDGET_TOL, steps,
                             f"max SVX-SVM {span.max():.3g}"))
        playing = np.array([_num(cols, f"g{i}_playing") for i in members])
        tail = playing[:, 3 * len(steps) // 4:]
        frac = float(tail.mean()) if tail.size else 1.0
        checks.append(Check("pg-play-fraction", frac >= min_play_fraction, None,
                            f"last-quartile play fraction {frac:.3f}"))
    agg = _num(cols, "agg_svm")
    checks.append(_check("xi-floor", agg < XI_FLOOR - FLOOR_TOL, steps, f"min SVM {agg.min():.3g}"))
    if not members:
        quiet = (np.abs(agg) > 0) | (np.abs(_num(cols, "agg_svx")) > 0)
        checks.append(_check("zero-roster-ledger", quiet, steps))

    fair = _num(cols, "fairness")
    checks.append(_check("fairness", fair > FAIR_TOL, steps, f"max {fair.max():.3g}"))

    res, tau, flagged = _num(cols, "residual"), _num(cols, "tau"), _num(cols, "flagged").astype(bool)
    checks.append(_check("residual-nonnegative", res < -1e-9, steps))
    checks.append(_check("residual-within-tau", (~flagged) & (res > tau), steps))

    weights = [np.array([float(x) for x in w.split(";")]) for w in cols["forecast_weights"]]
    bad_simplex = np.array([np.any(w < -1e-12) or abs(w.sum() - 1) > 1e-9 for w in weights])
    checks.append(_check("forecast-simplex", bad_simplex, steps))

    viol = _num(cols, "env_violation")
    checks.append(_check("environment-in-model", viol > 1e-9, steps, f"max {viol.max():.3g}"))
    for h in header:
        if h.startswith("d_"):
            d = _num(cols, h)
            checks.append(_check(f"distance-nonnegative[{h[2:]}]", d < 0, steps))
    return AuditReport(checks, float(flagged.mean()) if len(flagged) else 0.0, max_flagged_fraction)


def audit_run(path: str | Path) -> AuditReport:
    """Audit ``run.csv``; thresholds come from a sibling ``summary.json`` when present."""
    path = Path(path)
    header, cols = read_record(path)
    kw = {}
    summary = path.with_name("summary.json")
    if summary.exists():
        s = json.loads(summary.read_text())
        kw = {"max_flagged_fraction": s.get("max_flagged_fraction", 0.01),
              "min_play_fraction": s.get("min_play_fraction", 0.9)}
    return audit_columns(header, cols, **kw)
