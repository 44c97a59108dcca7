"""Data-generating environments: explicit measures, kernel samplers and an in-model adversary."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..market import ForecastStep
from ..measure import FiniteMeasure, condition
from ..models import ConditionalSet, IncompleteModel
from ..observation import AlphabetSchedule, enumerate_window


class EnvironmentExhausted(RuntimeError):
    """The environment cannot continue from the observed history."""


class Environment:
    """Chooses the conditional law of the next symbol, possibly after seeing the forecast."""

    def __init__(self, schedule: AlphabetSchedule):
        self.schedule = schedule

    def conditional(self, history: Sequence[int], step: ForecastStep | None, rng) -> np.ndarray:
        raise NotImplementedError

    def violation(self, history, p) -> float:
        """Amount by which ``p`` leaves the declared model set (0 when there is none)."""
        return 0.0

    def sample(self, history, step, rng) -> tuple[int, np.ndarray, float]:
        p = self.conditional(history, step, rng)
        symbol = int(rng.choice(len(p), p=p))
        return symbol, p, self.violation(history, p)


class ExplicitMeasureEnvironment(Environment):
    """Either periodic next-symbol laws (``conditionals[n % len]``) or a measure on ``Ob^length``."""

    def __init__(self, schedule, conditionals=None, weights=None, length=None):
        super().__init__(schedule)
        if (conditionals is None) == (weights is None):
            raise ValueError("give exactly one of conditionals or weights")
        self.conditionals = None if conditionals is None else [np.asarray(p, dtype=float) for p in conditionals]
        self.measure = None
        if weights is not None:
            self.measure = FiniteMeasure(enumerate_window([], int(length), schedule), weights)

    def conditional(self, history, step, rng):
        n = len(history)
        if self.conditionals is not None:
            p = self.conditionals[n % len(self.conditionals)]
            if len(p) != self.schedule.size(n):
                raise EnvironmentExhausted(f"conditional for step {n} has the wrong length")
            return p
        length = self.measure.window.depth
        if n >= length:
            raise EnvironmentExhausted(f"explicit measure covers only {length} steps")
        return condition(self.measure, history).marginal(1)


class KernelSamplerEnvironment(Environment):
    """Each step draws from the first kernel family active there, else from ``fallback`` (uniform by default)."""

    def __init__(self, schedule, kernels, fallback=None):
        super().__init__(schedule)
        self.kernels = list(kernels)
        self.fallback = None if fallback is None else np.asarray(fallback, dtype=float)

    def conditional(self, history, step, rng):
        n = len(history)
        for fam in self.kernels:
            K = fam.kernel(n, self.schedule)
            if K is not None:
                return K(history)
        size = self.schedule.size(n)
        if self.fallback is not None:
            if len(self.fallback) != size:
                raise EnvironmentExhausted(f"fallback law has length {len(self.fallback)}, alphabet has {size}")
            return self.fallback
        return np.full(size, 1.0 / size)


def allowed_set(models: Sequence[IncompleteModel], history, schedule) -> ConditionalSet:
    """Next-symbol laws allowed by every model at this history."""
    size = schedule.size(len(history))
    out = ConditionalSet(np.zeros(size))
    for m in models:
        out = out.intersect(m.next_symbol_set(tuple(history), schedule))
    return out


def next_symbol_kr(p, q) -> float:
    """KR distance between two next-symbol laws: one-step window, all distinct outcomes at distance 1."""
    return float(np.abs(np.asarray(p) - np.asarray(q)).sum()) / 3.0


class AdversarialEnvironment(Environment):
    """Picks the allowed next-symbol law farthest (in one-step KR distance) from the forecast.

    A heuristic, reactive adversary: it searches a fixed grid of
    ``candidates`` laws and breaks ties with its own random stream.
    """

    def __init__(self, schedule, models: Sequence[IncompleteModel], candidates: int = 64):
        super().__init__(schedule)
        self.models = list(models)
        self.candidates = int(candidates)

    def conditional(self, history, step, rng):
        allowed = allowed_set(self.models, history, self.schedule)
        grid = allowed.grid(self.candidates)
        if step is None:
            return grid[0]
        q = step.forecast.next_symbol_probs()
        scores = np.abs(grid - q[None, :]).sum(axis=1) / 3.0
        best = np.flatnonzero(scores >= scores.max() - 1e-12)
        pick = best[0] if len(best) == 1 else best[int(rng.integers(len(best)))]
        return grid[pick]

    def violation(self, history, p):
        worst = 0.0
        for m in self.models:
            s = m.next_symbol_set(tuple(history), self.schedule)
            if s.point is not None:
                worst = max(worst, float(np.max(np.abs(p - s.point))))
            worst = max(worst, float(np.max(s.lower - p, initial=0.0)))
        return worst


def build_environment(spec, schedule, models) -> Environment:
    params = spec.params
    if spec.kind == "explicit-measure":
        return ExplicitMeasureEnvironment(schedule, params.get("conditionals"), params.get("weights"),
                                          params.get("length"))
    if spec.kind == "kernel-sampler":
        return KernelSamplerEnvironment(schedule, params["kernels"], params.get("fallback"))
    if spec.kind == "adversarial-in-model":
        by_name = {m.name: m for m in models}
        return AdversarialEnvironment(schedule, [by_name[n] for n in params["models"]], params["candidates"])
    raise ValueError(f"unknown environment kind {spec.kind!r}")
