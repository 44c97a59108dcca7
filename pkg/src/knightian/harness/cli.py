"""Command line: ``simulate``, ``audit`` and ``kr``.

Exit codes: 0 success, 1 configuration error, 2 audit failure,
3 too many steps where the fixed-point solver missed its tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from ..geometry import ModelPolytope, distance_to_model, kr_witness
from ..measure import FiniteMeasure
from ..observation import AlphabetSchedule, enumerate_window
from .audit import audit_run
from .config import ConfigError, _section, load_config, parse_metric, parse_model

EXIT_OK, EXIT_CONFIG, EXIT_AUDIT, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("knightian")


def _print_report(report) -> None:
    for c in report.checks:
        print(c.line())
    print(f"flagged fraction {report.flagged_fraction:.4f} (limit {report.max_flagged_fraction:g})")


def cmd_simulate(args) -> int:
    from .runner import run_experiment

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output
    if out is None:
        print("config error: no output directory (use --out)", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s for %d steps (seed %s)", cfg.name, cfg.steps, args.seed if args.seed is not None else cfg.seed)
    try:
        record = run_experiment(cfg, seed=args.seed)
    except (ValueError, RuntimeError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    csv_path, _ = record.write(out)
    report = audit_run(csv_path)
    (Path(out) / "audit.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    _print_report(report)
    for name, stats in record.summary["distances"].items():
        print(f"distance[{name}] first-decile median {stats['median_first_decile']:.4g}, "
              f"last-decile median {stats['median_last_decile']:.4g}")
    if not report.passed:
        return EXIT_AUDIT
    if report.flags_exceeded:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_audit(args) -> int:
    try:
        report = audit_run(args.record)
    except (OSError, ValueError) as exc:
        print(f"cannot read record: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _print_report(report)
    if not report.passed:
        return EXIT_AUDIT
    if report.flags_exceeded:
        return EXIT_SOLVER
    return EXIT_OK


def kr_query(raw: dict) -> dict:
    """One-shot geometry query; see ``configs/kr_example.yaml``."""
    raw = _section(raw, "kr", {"alphabet", "horizon", "history", "metric", "mu", "nu", "model", "constraints"},
                   {"mu"})
    targets = [k for k in ("nu", "model", "constraints") if k in raw]
    if len(targets) != 1:
        raise ConfigError("kr: give exactly one of 'nu', 'model' or 'constraints'")
    try:
        schedule = AlphabetSchedule(raw.get("alphabet", 2), int(raw.get("horizon", 1)))
        window = enumerate_window(raw.get("history", []), schedule.horizon, schedule)
        mu = FiniteMeasure(window, raw["mu"])
    except ValueError as exc:
        raise ConfigError(f"kr: {exc}") from None
    metric = parse_metric(raw.get("metric"))
    if "nu" in raw:
        try:
            nu = FiniteMeasure(window, raw["nu"])
        except ValueError as exc:
            raise ConfigError(f"kr.nu: {exc}") from None
        r, f = kr_witness(mu, nu, metric)
        kind = "measure"
    else:
        if "model" in raw:
            poly = parse_model(raw["model"], 0, schedule).bound(window)
        else:
            c = _section(raw["constraints"], "kr.constraints", {"A_ub", "b_ub", "A_eq", "b_eq"})
            try:
                poly = ModelPolytope(window, c.get("A_ub"), c.get("b_ub"), c.get("A_eq"), c.get("b_eq"))
            except ValueError as exc:
                raise ConfigError(f"kr.constraints: {exc}") from None
        if poly.is_empty:
            raise ConfigError("kr: the model set is empty")
        r, f = distance_to_model(mu, poly, metric)
        kind = "model"
    return {
        "target": kind,
        "distance": r,
        "witness": f.values.tolist(),
        "witness_norm": f.norm_bound,
        "completions": ["".join(map(str, c[window.n:])) for c in window.completions],
    }


def cmd_kr(args) -> int:
    try:
        raw = yaml.safe_load(Path(args.config).read_text())
        result = kr_query(raw)
    except (OSError, yaml.YAMLError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="knightian", description="Forecasting with incomplete models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="run an experiment and audit it")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)
    a = sub.add_parser("audit", help="re-check the invariants of a run record")
    a.add_argument("--record", required=True)
    a.set_defaults(func=cmd_audit)
    k = sub.add_parser("kr", help="KR distance between measures or to a model set")
    k.add_argument("--config", required=True)
    k.set_defaults(func=cmd_kr)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
