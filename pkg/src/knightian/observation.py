"""Finite observation alphabets, outcome windows and the metric family rho_n."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np


class AlphabetSchedule:
    """Sizes of the observation alphabets ``|Ob_n|`` plus the forecast depth.

    ``sizes`` may be a single integer (constant alphabet) or a sequence; steps
    past the end of a sequence reuse its last entry.
    """

    def __init__(self, sizes: int | Sequence[int] = 2, horizon: int = 4):
        if isinstance(sizes, (int, np.integer)):
            sizes = [int(sizes)]
        sizes = tuple(int(s) for s in sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError(f"alphabet sizes must be positive, got {sizes}")
        if int(horizon) < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        self.sizes = sizes
        self.horizon = int(horizon)

    def size(self, n: int) -> int:
        if n < 0:
            raise ValueError(f"negative step index {n}")
        return self.sizes[min(n, len(self.sizes) - 1)]

    def shape(self, n: int, depth: int) -> tuple[int, ...]:
        return tuple(self.size(m) for m in range(n, n + depth))

    def check_history(self, y: Sequence[int]) -> tuple[int, ...]:
        y = tuple(int(s) for s in y)
        for m, s in enumerate(y):
            if not 0 <= s < self.size(m):
                raise ValueError(
                    f"symbol {s} at position {m} outside alphabet of size {self.size(m)}"
                )
        return y

    def __eq__(self, other):
        return (
            isinstance(other, AlphabetSchedule)
            and self.sizes == other.sizes
            and self.horizon == other.horizon
        )

    def __hash__(self):
        return hash((self.sizes, self.horizon))

    def __repr__(self):
        sizes = self.sizes[0] if len(self.sizes) == 1 else list(self.sizes)
        return f"AlphabetSchedule(sizes={sizes}, horizon={self.horizon})"


@dataclass(frozen=True, eq=False)
class OutcomeWindow:
    """All extensions of ``base`` by ``depth`` symbols, in lexicographic order.

    The ordering is part of the data contract: every measure or payoff vector
    over a window is indexed against ``suffixes``.
    """

    schedule: AlphabetSchedule
    base: tuple[int, ...]
    depth: int

    @property
    def n(self) -> int:
        return len(self.base)

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return self.schedule.shape(self.n, self.depth)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @cached_property
    def suffixes(self) -> np.ndarray:
        """``(size, depth)`` integer array of the appended symbols."""
        if self.depth == 0:
            return np.zeros((1, 0), dtype=np.int64)
        grids = np.indices(self.shape).reshape(self.depth, -1)
        return grids.T.copy()

    @property
    def completions(self) -> list[tuple[int, ...]]:
        return [self.base + tuple(int(v) for v in s) for s in self.suffixes]

    def index(self, completion: Sequence[int]) -> int:
        completion = tuple(completion)
        if len(completion) != self.n + self.depth or completion[: self.n] != self.base:
            raise ValueError(f"{completion} is not a completion of {self.base}")
        return int(np.ravel_multi_index(completion[self.n :], self.shape)) if self.depth else 0

    def cylinder_mask(self, prefix: Sequence[int]) -> np.ndarray:
        """Boolean mask of completions that extend ``prefix``."""
        prefix = tuple(prefix)
        k = len(prefix) - self.n
        if k < 0 or k > self.depth or prefix[: self.n] != self.base:
            raise ValueError(f"{prefix} does not refine window base {self.base}")
        if k == 0:
            return np.ones(self.size, dtype=bool)
        return np.all(self.suffixes[:, :k] == np.asarray(prefix[self.n :]), axis=1)

    def key(self) -> tuple:
        return (self.schedule, self.base, self.depth)

    def __eq__(self, other):
        return isinstance(other, OutcomeWindow) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"OutcomeWindow(base={list(self.base)}, depth={self.depth}, shape={self.shape})"


def enumerate_window(
    y: Sequence[int], horizon: int | None = None, schedule: AlphabetSchedule | None = None
) -> OutcomeWindow:
    """Window of all depth-``horizon`` completions of history ``y``."""
    schedule = schedule if schedule is not None else AlphabetSchedule()
    horizon = schedule.horizon if horizon is None else int(horizon)
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    return OutcomeWindow(schedule, schedule.check_history(y), horizon)


def _first_disagreement(x: np.ndarray, xp: np.ndarray) -> np.ndarray:
    diff = x != xp
    return np.where(diff.any(axis=-1), diff.argmax(axis=-1), -1)


class MetricFamily:
    """A family of metrics rho_n, evaluated on the completions of a window."""

    #: True when the metric is an ultrametric given by prefix depth, so the
    #: Lipschitz ball admits the exact tree formulation in ``geometry``.
    tree_structured = False

    def evaluate(self, n: int, x: Sequence[int], xp: Sequence[int]) -> float:
        raise NotImplementedError

    def matrix(self, window: OutcomeWindow) -> np.ndarray:
        raise NotImplementedError

    def cache_key(self, window: OutcomeWindow):
        return (id(self), window.n, window.shape)


@dataclass(frozen=True)
class GeometricMetric(MetricFamily):
    """``rho_n(x, x') = max{base**(n - m) : x_m != x'_m}``, zero on the diagonal."""

    base: float = 2.0
    tree_structured = True

    def __post_init__(self):
        if not self.base > 1.0:
            raise ValueError(f"geometric base must exceed 1, got {self.base}")

    def evaluate(self, n, x, xp):
        x, xp = tuple(x), tuple(xp)
        if len(x) != len(xp) or x[:n] != xp[:n]:
            raise ValueError("completions do not belong to the same window")
        for m in range(n, len(x)):
            if x[m] != xp[m]:
                return float(self.base ** (n - m))
        return 0.0

    def level_heights(self, depth: int) -> np.ndarray:
        """Distance between completions whose first disagreement is at suffix index d."""
        return self.base ** -np.arange(depth, dtype=float)

    def matrix(self, window):
        s = window.suffixes
        first = _first_disagreement(s[:, None, :], s[None, :, :])
        heights = self.level_heights(max(window.depth, 1))
        return np.where(first >= 0, heights[np.maximum(first, 0)], 0.0)

    def cache_key(self, window):
        return ("geometric", self.base, window.shape)


class CustomMetric(MetricFamily):
    """User-supplied ``rule(n, x, x')``; metric axioms are checked per window."""

    def __init__(self, rule: Callable[[int, tuple, tuple], float]):
        self.rule = rule
        self._checked: dict = {}

    def evaluate(self, n, x, xp):
        return float(self.rule(n, tuple(x), tuple(xp)))

    def matrix(self, window):
        key = (window.n, window.base, window.shape)
        if key not in self._checked:
            comps = window.completions
            k = len(comps)
            out = np.zeros((k, k))
            for i in range(k):
                for j in range(k):
                    out[i, j] = self.evaluate(window.n, comps[i], comps[j])
            check_metric_axioms(out)
            self._checked[key] = out
        return self._checked[key]

    def cache_key(self, window):
        return (id(self), window.n, window.base, window.shape)


def check_metric_axioms(rho: np.ndarray, atol: float = 1e-12) -> None:
    """Exhaustive metric-axiom check on a finite distance matrix; raises ValueError."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(rho)):
        raise ValueError("distance matrix has non-finite entries")
    if np.any(np.abs(np.diag(rho)) > atol):
        raise ValueError("rho(x, x) must vanish")
    off = ~np.eye(len(rho), dtype=bool)
    if np.any(rho[off] <= 0):
        raise ValueError("rho must be positive between distinct completions")
    if np.any(np.abs(rho - rho.T) > atol):
        raise ValueError("rho must be symmetric")
    # rho[i, k] <= rho[i, j] + rho[j, k] for all triples
    through = rho[:, :, None] + rho[None, :, :]
    if np.any(rho[:, None, :] > through + atol):
        raise ValueError("rho violates the triangle inequality")


DEFAULT_METRIC = GeometricMetric()


def rho_n(n: int, x: Sequence[int], xp: Sequence[int], metric: MetricFamily | None = None) -> float:
    """Distance between two completions of the same length-``n`` history."""
    metric = metric if metric is not None else DEFAULT_METRIC
    x, xp = tuple(x), tuple(xp)
    if len(x) != len(xp) or x[:n] != xp[:n]:
        raise ValueError("completions do not belong to the same window")
    return metric.evaluate(n, x, xp)
