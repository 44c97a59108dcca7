"""Run one experiment: environment vs. dominant forecaster, one CSV row per step."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..forecaster import DominantForecaster
from ..gambling import zeta_weights
from .config import ExperimentConfig
from .environments import build_environment

SCHEMA = "knightian-run/1"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def fmt_vector(v) -> str:
    return ";".join(fmt(x) for x in np.asarray(v, dtype=float).reshape(-1))


@dataclass
class RunRecord:
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([x if isinstance(x, str) else fmt(x) for x in r])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, summary_path = out / "run.csv", out / "summary.json"
        csv_path.write_text(self.to_csv())
        summary_path.write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return csv_path, summary_path


def roster_columns(n_members: int) -> list[str]:
    cols = []
    for i in range(n_members):
        cols += [f"g{i}_pg_svm", f"g{i}_pg_svx", f"g{i}_playing", f"g{i}_zeta_svm", f"g{i}_zeta_svx",
                 f"g{i}_budget_margin"]
    return cols


def decile_stats(series) -> dict:
    s = np.asarray(series, dtype=float)
    k = max(1, len(s) // 10)
    first, last = float(np.median(s[:k])), float(np.median(s[-k:]))
    return {"median_first_decile": first, "median_last_decile": last, "final": float(s[-1]),
            "trend_ok": bool(last <= 0.5 * first)}


def build_forecaster(cfg: ExperimentConfig, solver_seed) -> DominantForecaster:
    return DominantForecaster(models=cfg.models, ladder=cfg.ladder, alphabet=list(cfg.schedule.sizes),
                              horizon=cfg.schedule.horizon, metric=cfg.metric, b_max=cfg.b_max,
                              solver=cfg.solver, random_state=solver_seed)


def run_experiment(cfg: ExperimentConfig, seed: int | None = None, progress=None) -> RunRecord:
    """Simulate ``cfg.steps`` rounds; the environment and the solver get independent seed streams."""
    seed = cfg.seed if seed is None else int(seed)
    env_seq, solver_seq = np.random.SeedSequence(seed).spawn(2)
    env_rng = np.random.default_rng(env_seq)
    forecaster = build_forecaster(cfg, solver_seq)
    forecaster.fit([])
    env = build_environment(cfg.environment, cfg.schedule, cfg.models)
    names = [m.name for m in cfg.models]
    members = forecaster.members_
    columns = (["n", "symbol", "forecast_next", "forecast_weights", "residual", "tau", "flagged", "iterations",
                "fairness", "env_law", "env_violation"]
               + [f"d_{name}" for name in names] + ["agg_svm", "agg_svx"] + roster_columns(len(members)))
    rows = []
    t0 = time.perf_counter()
    for n in range(cfg.steps):
        step = forecaster.forecast()
        symbol, law, viol = env.sample(forecaster.history_, step, env_rng)
        forecaster.observe(symbol)
        snap = step.snapshots
        row = [n, symbol, fmt_vector(step.forecast.next_symbol_probs()), fmt_vector(step.forecast.weights),
               step.residual, step.tau, step.flagged, step.iterations, snap.get("fairness", 0.0),
               fmt_vector(law), viol]
        row += [step.distances[name] for name in names]
        row += list(snap.get("aggregate", (0.0, 0.0)))
        for i in range(len(members)):
            g = snap[i]
            row += [g["pg"][0], g["pg"][1], g["playing"], g["zeta"][0], g["zeta"][1], g["margin"]]
        rows.append(row)
        if progress is not None:
            progress(n)
    elapsed = time.perf_counter() - t0
    record = RunRecord(columns, rows)
    record.summary = summarize(cfg, seed, record, forecaster, elapsed)
    return record


def summarize(cfg, seed, record, forecaster, elapsed) -> dict:
    steps = forecaster.steps_
    flagged = np.array([s.flagged for s in steps])
    residuals = np.array([s.residual for s in steps])
    w = zeta_weights(cfg.b_max)
    out = {
        "schema": SCHEMA,
        "name": cfg.name,
        "seed": seed,
        "steps": cfg.steps,
        "alphabet": list(cfg.schedule.sizes),
        "horizon": cfg.schedule.horizon,
        "ladder": list(cfg.ladder),
        "b_max": cfg.b_max,
        "zeta_tail_bound": 1.0 / cfg.b_max,
        "zeta_floor": -float(w @ np.arange(1, cfg.b_max + 1)),
        "uniform_bound": 2.0,
        "roster": [{"model": name, "precision": k, "eps": 1.0 / k} for name, k, _ in forecaster.members_],
        "models": [m.name for m in cfg.models],
        "flagged_fraction": float(flagged.mean()),
        "max_flagged_fraction": cfg.max_flagged_fraction,
        "min_play_fraction": cfg.min_play_fraction,
        "residual_sum": float(residuals.sum()),
        "tau_sum_bound": cfg.solver.slack_bound(cfg.steps),
        "distances": {m.name: decile_stats(forecaster.distance_series(m.name)) for m in cfg.models},
        "runtime_seconds": round(elapsed, 3),
    }
    return out
