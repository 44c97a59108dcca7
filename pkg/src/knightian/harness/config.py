"""Experiment configuration: YAML in, validated dataclasses out.

Unknown keys anywhere in the file are errors, so a config is a complete,
reviewable description of a run. See ``configs/`` for annotated examples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..geometry import EmptyPolytopeError
from ..market import FixedPointConfig
from ..measure import FiniteMeasure
from ..models import (
    CopyKernels,
    FiniteFamilyModel,
    IIDKernels,
    IncompleteModel,
    KernelFamily,
    KernelModel,
    NoisyChannelKernels,
    NoisySensorModel,
    StepSet,
)
from ..observation import AlphabetSchedule, CustomMetric, GeometricMetric, MetricFamily, enumerate_window


class ConfigError(ValueError):
    """The experiment configuration is malformed or inconsistent."""


def _section(raw, where: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = set(required) - set(raw)
    if missing:
        raise ConfigError(f"{where}: missing key(s) {sorted(missing)}")
    return raw


def _steps(spec, where):
    try:
        return StepSet(spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


# -- pieces ----------------------------------------------------------------------------


def parse_metric(raw) -> MetricFamily:
    raw = _section(raw or {"kind": "geometric"}, "metric", {"kind", "base"})
    kind = raw.get("kind", "geometric")
    if kind == "geometric":
        try:
            return GeometricMetric(float(raw.get("base", 2.0)))
        except ValueError as exc:
            raise ConfigError(f"metric: {exc}") from None
    if kind == "prefix-count":
        # counts disagreeing positions with geometric weights; not an ultrametric
        base = float(raw.get("base", 2.0))

        def rule(n, x, xp):
            return float(sum(base ** (n - m) for m in range(n, len(x)) if x[m] != xp[m]))

        return CustomMetric(rule)
    raise ConfigError(f"metric: unknown kind {kind!r}")


def parse_kernels(raw, where: str) -> KernelFamily:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    family = raw.get("family")
    try:
        if family == "copy":
            raw = _section(raw, where, {"family", "steps", "lag"})
            return CopyKernels(_steps(raw.get("steps", "odd"), where), int(raw.get("lag", 1)))
        if family == "iid":
            raw = _section(raw, where, {"family", "steps", "probs"}, {"probs"})
            return IIDKernels(raw["probs"], _steps(raw.get("steps", "all"), where))
        if family == "noisy-channel":
            raw = _section(raw, where, {"family", "steps", "noise", "signal"})
            signal = raw.get("signal", "rotate")
            if signal not in ("rotate", "repeat", "constant"):
                raise ConfigError(f"{where}: unknown signal {signal!r}")
            return NoisyChannelKernels(float(raw.get("noise", 0.3)), signal, _steps(raw.get("steps", "all"), where))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unknown kernel family {family!r}")


def parse_model(raw, index: int, schedule: AlphabetSchedule) -> IncompleteModel:
    where = f"models[{index}]"
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError(f"{where}: expected a mapping with a 'kind'")
    kind = raw["kind"]
    name = str(raw.get("name", f"model{index}"))
    if kind == "kernel":
        raw = _section(raw, where, {"name", "kind", "kernels"}, {"kernels"})
        return KernelModel(parse_kernels(raw["kernels"], f"{where}.kernels"), name=name)
    if kind == "noisy-sensor":
        raw = _section(raw, where, {"name", "kind", "p_min", "steps"}, {"p_min"})
        p = float(raw["p_min"])
        if p < 0:
            raise ConfigError(f"{where}: p_min must be nonnegative")
        return NoisySensorModel(p, _steps(raw.get("steps", "all"), where), name=name)
    if kind == "finite-family":
        raw = _section(raw, where, {"name", "kind", "length", "vertices"}, {"length", "vertices"})
        length = int(raw["length"])
        if length < 1:
            raise ConfigError(f"{where}: length must be >= 1")
        window = enumerate_window([], length, schedule)
        try:
            verts = [FiniteMeasure(window, v) for v in raw["vertices"]]
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if not verts:
            raise ConfigError(f"{where}: no vertices")
        return FiniteFamilyModel(verts, name=name)
    raise ConfigError(f"{where}: unknown model kind {kind!r}")


@dataclass
class EnvironmentSpec:
    kind: str
    params: dict = field(default_factory=dict)


ENV_KEYS = {
    "explicit-measure": ({"kind", "conditionals", "weights", "length"}, set()),
    "kernel-sampler": ({"kind", "kernels", "fallback"}, {"kernels"}),
    "adversarial-in-model": ({"kind", "models", "candidates"}, set()),
}


def parse_environment(raw, schedule, models) -> EnvironmentSpec:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("environment: expected a mapping with a 'kind'")
    kind = raw["kind"]
    if kind not in ENV_KEYS:
        raise ConfigError(f"environment: unknown kind {kind!r}")
    allowed, required = ENV_KEYS[kind]
    raw = dict(_section(raw, "environment", allowed, required))
    raw.pop("kind")
    if kind == "explicit-measure":
        if ("conditionals" in raw) == ("weights" in raw):
            raise ConfigError("environment: give exactly one of 'conditionals' or 'weights'")
        if "weights" in raw and "length" not in raw:
            raise ConfigError("environment: 'weights' needs 'length'")
        if "conditionals" in raw:
            for i, p in enumerate(raw["conditionals"]):
                p = np.asarray(p, dtype=float)
                if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
                    raise ConfigError(f"environment.conditionals[{i}] is not a probability vector")
    elif kind == "kernel-sampler":
        ks = raw["kernels"]
        ks = ks if isinstance(ks, list) else [ks]
        raw["kernels"] = [parse_kernels(k, f"environment.kernels[{i}]") for i, k in enumerate(ks)]
        if "fallback" in raw:
            p = np.asarray(raw["fallback"], dtype=float)
            if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
                raise ConfigError("environment.fallback is not a probability vector")
    else:
        names = raw.get("models", [m.name for m in models])
        known = {m.name for m in models}
        bad = [n for n in names if n not in known]
        if bad or not names:
            raise ConfigError(f"environment.models: unknown or empty model list {bad or names}")
        raw["models"] = list(names)
        raw["candidates"] = int(raw.get("candidates", 64))
        if raw["candidates"] < 1:
            raise ConfigError("environment.candidates must be >= 1")
    return EnvironmentSpec(kind, raw)


# -- top level ---------------------------------------------------------------------------


TOP_KEYS = {"name", "alphabet", "horizon", "metric", "models", "ladder", "b_max", "solver",
            "environment", "steps", "seed", "audit", "output"}
SOLVER_KEYS = {"tau0", "tau_floor", "max_iter", "restarts", "eta0", "eta_max", "eta_min", "backtrack"}
AUDIT_KEYS = {"max_flagged_fraction", "min_play_fraction"}


@dataclass
class ExperimentConfig:
    name: str
    schedule: AlphabetSchedule
    metric: MetricFamily
    models: list
    ladder: tuple
    b_max: int
    solver: FixedPointConfig
    environment: EnvironmentSpec
    steps: int
    seed: int
    max_flagged_fraction: float = 0.01
    min_play_fraction: float = 0.9
    output: str | None = None
    raw: dict = field(default_factory=dict, repr=False)


def parse_config(raw: dict[str, Any]) -> ExperimentConfig:
    raw = _section(raw, "config", TOP_KEYS, {"environment", "steps"})
    try:
        schedule = AlphabetSchedule(raw.get("alphabet", 2), int(raw.get("horizon", 4)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"alphabet/horizon: {exc}") from None
    metric = parse_metric(raw.get("metric"))
    models_raw = raw.get("models") or []
    if not isinstance(models_raw, list):
        raise ConfigError("models: expected a list")
    models = [parse_model(m, i, schedule) for i, m in enumerate(models_raw)]
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigError(f"models: duplicate names {names}")
    ladder = raw.get("ladder", [1, 2, 4, 8])
    if not isinstance(ladder, list) or not ladder or any(
        isinstance(k, bool) or not isinstance(k, int) or k < 1 for k in ladder
    ):
        raise ConfigError("ladder: expected a nonempty list of positive integers")
    b_max = raw.get("b_max", 64)
    if isinstance(b_max, bool) or not isinstance(b_max, int) or b_max < 1:
        raise ConfigError("b_max: expected a positive integer")
    try:
        solver = FixedPointConfig(**_section(raw.get("solver"), "solver", SOLVER_KEYS))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"solver: {exc}") from None
    steps = raw["steps"]
    if isinstance(steps, bool) or not isinstance(steps, int) or steps < 1:
        raise ConfigError("steps: expected a positive integer")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed: expected a nonnegative integer")
    audit = _section(raw.get("audit"), "audit", AUDIT_KEYS)
    output = _section(raw.get("output"), "output", {"dir"}).get("dir")
    env = parse_environment(raw["environment"], schedule, models)
    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        schedule=schedule,
        metric=metric,
        models=models,
        ladder=tuple(ladder),
        b_max=b_max,
        solver=solver,
        environment=env,
        steps=steps,
        seed=seed,
        max_flagged_fraction=float(audit.get("max_flagged_fraction", 0.01)),
        min_play_fraction=float(audit.get("min_play_fraction", 0.9)),
        output=output,
        raw=raw,
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Startup checks: metric axioms and nonempty model bounds on the first windows."""
    window = enumerate_window([], cfg.schedule.horizon, cfg.schedule)
    try:
        cfg.metric.matrix(window)
    except ValueError as exc:
        raise ConfigError(f"metric: {exc}") from None
    for model in cfg.models:
        for base in ([], [0], [0, 0]):
            w = enumerate_window(base, cfg.schedule.horizon, cfg.schedule)
            try:
                poly = model.bound(w)
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"model {model.name!r}: {exc}") from None
            if poly.is_empty:
                raise ConfigError(f"model {model.name!r}: empty bound after history {base}")
    if cfg.environment.kind == "adversarial-in-model":
        from .environments import allowed_set

        by_name = {m.name: m for m in cfg.models}
        chosen = [by_name[n] for n in cfg.environment.params["models"]]
        try:
            for base in ([], [0], [0, 0]):
                allowed_set(chosen, base, cfg.schedule)
        except (ValueError, EmptyPolytopeError) as exc:
            raise ConfigError(f"environment: {exc}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_config(raw)
