"""Incomplete models and their regular upper bounds ``M_n(y)`` on outcome windows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import ModelPolytope
from .measure import FiniteMeasure, KernelSpec, condition
from .observation import AlphabetSchedule, OutcomeWindow


# -- step sets -----------------------------------------------------------------


class StepSet:
    """Set of active steps: ``"all"``, ``"odd"``, ``"even"``, ``"none"`` or explicit indices."""

    def __init__(self, spec="all"):
        if isinstance(spec, StepSet):
            spec = spec.spec
        if isinstance(spec, str):
            if spec not in ("all", "odd", "even", "none"):
                raise ValueError(f"unknown step set {spec!r}")
            self.spec = spec
            self._explicit = None
        else:
            self._explicit = frozenset(int(m) for m in spec)
            self.spec = sorted(self._explicit)

    def __contains__(self, m: int) -> bool:
        if self._explicit is not None:
            return m in self._explicit
        return {
            "all": True,
            "none": False,
            "odd": m % 2 == 1,
            "even": m % 2 == 0,
        }[self.spec]

    def __repr__(self):
        return f"StepSet({self.spec!r})"


# -- kernel families -------------------------------------------------------------


class KernelFamily:
    """Kernels ``K_m`` for ``m`` in an active step set."""

    def __init__(self, steps="all"):
        self.steps = StepSet(steps)
        self._cache: dict = {}

    def row(self, history: tuple[int, ...], size: int) -> np.ndarray:
        raise NotImplementedError

    def kernel(self, m: int, schedule: AlphabetSchedule) -> KernelSpec | None:
        if m not in self.steps:
            return None
        k = self._cache.get(m)
        if k is None:
            size = schedule.size(m)
            k = KernelSpec(m, lambda h, size=size: self.row(h, size), size)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[m] = k
        return k


class CopyKernels(KernelFamily):
    """Deterministically repeat the symbol observed ``lag`` steps earlier."""

    def __init__(self, steps="odd", lag: int = 1):
        super().__init__(steps)
        if lag < 1:
            raise ValueError("lag must be >= 1")
        self.lag = lag

    def row(self, history, size):
        if len(history) < self.lag:
            raise ValueError(f"copy kernel needs {self.lag} previous symbols")
        out = np.zeros(size)
        out[history[-self.lag]] = 1.0
        return out


class IIDKernels(KernelFamily):
    """The same next-symbol distribution regardless of history."""

    def __init__(self, probs, steps="all"):
        super().__init__(steps)
        p = np.asarray(probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"{probs} is not a probability vector")
        self.probs = p

    def row(self, history, size):
        if size != len(self.probs):
            raise ValueError("iid kernel alphabet mismatch")
        return self.probs


class NoisyChannelKernels(KernelFamily):
    """A hidden signal observed through a channel that, with probability ``noise``,
    outputs a uniformly random symbol instead.

    ``signal`` is ``"rotate"`` (previous symbol + 1), ``"repeat"`` (previous
    symbol), ``"constant"`` (always 0) or a callable ``history -> symbol``.
    """

    def __init__(self, noise: float = 0.3, signal="rotate", steps="all"):
        super().__init__(steps)
        if not 0.0 <= noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        self.noise = float(noise)
        self.signal = signal

    def _signal(self, history, size):
        if callable(self.signal):
            return int(self.signal(history)) % size
        last = history[-1] if history else 0
        return {"rotate": (last + 1) % size, "repeat": last % size, "constant": 0}[self.signal]

    def row(self, history, size):
        out = np.full(size, self.noise / size)
        out[self._signal(history, size)] += 1.0 - self.noise
        return out


class TableKernels(KernelFamily):
    """Explicit kernels: ``tables[m]`` maps histories of length ``m`` to rows."""

    def __init__(self, tables: dict):
        super().__init__(sorted(int(m) for m in tables))
        self.tables = {int(m): t for m, t in tables.items()}

    def row(self, history, size):
        t = self.tables[len(history)]
        return t(history) if callable(t) else t[tuple(history)]


# -- bounds ------------------------------------------------------------------------


def _prefix_index(window: OutcomeWindow, d: int) -> np.ndarray:
    """Index of each completion's length-``d`` suffix prefix, in lexicographic order."""
    block = int(np.prod(window.shape[d:], dtype=int))
    return np.arange(window.size) // block


def _prefixes(window: OutcomeWindow, d: int):
    return [tuple(int(v) for v in p) for p in np.ndindex(*window.shape[:d])] if d else [()]


def kernel_model_bound(kernels: KernelFamily, window: OutcomeWindow, name="kernel") -> ModelPolytope:
    """Window-truncated ``M^K_n(y)``: every active step inside the window follows its kernel.

    For active ``m`` in ``[n, n + H)``, prefix ``z`` and symbol ``o``:
    ``nu(z o) = K_m(y z)(o) * nu(z)``. Steps past the window are dropped.
    """
    rows = []
    S = window.suffixes
    for d in range(window.depth):
        m = window.n + d
        K = kernels.kernel(m, window.schedule)
        if K is None:
            continue
        pidx = _prefix_index(window, d)
        size = window.shape[d]
        for idx, z in enumerate(_prefixes(window, d)):
            through_z = (pidx == idx).astype(float)
            row = K(window.base + z)
            # the last symbol's constraint is implied by the others
            for o in range(size - 1):
                rows.append(through_z * (S[:, d] == o) - row[o] * through_z)
    A_eq = np.array(rows) if rows else None
    b_eq = np.zeros(len(rows)) if rows else None
    return ModelPolytope(window, A_eq=A_eq, b_eq=b_eq, name=name)


def noisy_sensor_bound(p_min: float, window: OutcomeWindow, steps="all", name="noisy-sensor") -> ModelPolytope:
    """Every one-step conditional inside the window gives each symbol probability >= p_min."""
    steps = StepSet(steps)
    rows = []
    S = window.suffixes
    for d in range(window.depth):
        m = window.n + d
        if m not in steps:
            continue
        size = window.shape[d]
        if p_min > 1.0 / size + 1e-12:
            raise ValueError(f"p_min={p_min} is infeasible for an alphabet of size {size}")
        if p_min <= 0.0:
            continue
        pidx = _prefix_index(window, d)
        for idx in range(int(np.prod(window.shape[:d], dtype=int))):
            through_z = (pidx == idx).astype(float)
            for o in range(size):
                rows.append(p_min * through_z - through_z * (S[:, d] == o))
    A_ub = np.array(rows) if rows else None
    b_ub = np.zeros(len(rows)) if rows else None
    return ModelPolytope(window, A_ub=A_ub, b_ub=b_ub, name=name)


def finite_conditional_bound(vertices: Sequence[FiniteMeasure], y: Sequence[int],
                             horizon: int | None = None, name="finite") -> ModelPolytope:
    """Minimal upper bound for a convex family given by vertex measures over ``Ob^N``.

    The conditional of a mixture given ``y`` is a mixture of the vertex
    conditionals (re-weighted by each vertex's mass on ``y``), so the bound
    is the convex hull of the conditionals of vertices that charge ``y``.
    If no vertex charges ``y`` the result is the full simplex, flagged with
    ``unbounded_update``.
    """
    if not vertices:
        raise ValueError("need at least one vertex")
    w0 = vertices[0].window
    if any(v.window != w0 for v in vertices):
        raise ValueError("vertices must share a window")
    y = w0.schedule.check_history(y)
    N = w0.n + w0.depth
    if len(y) > N:
        raise ValueError(f"history of length {len(y)} exceeds the family's horizon {N}")
    horizon = N - len(y) if horizon is None else int(horizon)
    window = OutcomeWindow(w0.schedule, y, horizon)
    conds = [condition(v, y) for v in vertices if v.mass(y) > 0.0]
    if not conds:
        return ModelPolytope(window, name=name, unbounded_update=True)
    L = min(horizon, N - len(y))
    V = np.array([c.marginal(L) for c in conds])
    # marginalization of window weights onto the first L appended symbols
    cells = _prefix_index(window, L)
    n_cells = int(np.prod(window.shape[:L], dtype=int))
    P = np.zeros((n_cells, window.size))
    P[cells, np.arange(window.size)] = 1.0
    A_eq = np.hstack([P, -V.T])
    return ModelPolytope(window, A_eq=A_eq, b_eq=np.zeros(n_cells), n_aux=len(V), name=name)


# -- model objects ---------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalSet:
    """Allowed next-symbol distributions: ``{p : p >= lower}``, or the single ``point``."""

    lower: np.ndarray
    point: np.ndarray | None = None

    def contains(self, p, tol=1e-12) -> bool:
        p = np.asarray(p, dtype=float)
        if self.point is not None:
            return bool(np.max(np.abs(p - self.point)) <= tol)
        return bool(np.all(p >= self.lower - tol))

    def intersect(self, other: ConditionalSet) -> ConditionalSet:
        if self.point is not None or other.point is not None:
            pts = [s.point for s in (self, other) if s.point is not None]
            if len(pts) == 2 and np.max(np.abs(pts[0] - pts[1])) > 1e-12:
                raise ValueError("models prescribe different next-symbol distributions")
            p = pts[0]
            if not (self.contains(p) and other.contains(p)):
                raise ValueError("models admit no common next-symbol distribution")
            return ConditionalSet(np.maximum(self.lower, other.lower), p)
        lower = np.maximum(self.lower, other.lower)
        if lower.sum() > 1.0 + 1e-12:
            raise ValueError("models admit no common next-symbol distribution")
        return ConditionalSet(lower)

    def grid(self, n_candidates: int) -> np.ndarray:
        """A fixed grid of members: lattice points of ``lower + (1 - sum lower) * simplex``."""
        if self.point is not None:
            return self.point[None, :]
        k = len(self.lower)
        slack = 1.0 - self.lower.sum()
        if k == 1 or slack <= 0.0:
            return (self.lower / self.lower.sum())[None, :]
        res = 1
        while _n_lattice(k, res + 1) <= n_candidates:
            res += 1
        pts = np.array(_lattice(k, res), dtype=float) / res
        return self.lower + slack * pts


def _n_lattice(k, res):
    from math import comb

    return comb(res + k - 1, k - 1)


def _lattice(k, res):
    if k == 1:
        return [(res,)]
    out = []
    for first in range(res, -1, -1):
        out += [(first,) + rest for rest in _lattice(k - 1, res - first)]
    return out


class IncompleteModel:
    """An incomplete model together with its regular upper bound ``M_n(y)``."""

    kind = "explicit-polytope-family"

    def __init__(self, name: str):
        self.name = name
        self._last = None

    def _bound(self, window: OutcomeWindow) -> ModelPolytope:
        raise NotImplementedError

    def bound(self, window: OutcomeWindow) -> ModelPolytope:
        if self._last is not None and self._last[0] == window:
            return self._last[1]
        poly = self._bound(window)
        self._last = (window, poly)
        return poly

    def next_symbol_set(self, history, schedule: AlphabetSchedule) -> ConditionalSet:
        raise NotImplementedError(f"{type(self).__name__} has no per-step conditional description")

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class KernelModel(IncompleteModel):
    """Measures whose active steps follow the given kernels; other steps are free."""

    kind = "kernel-constraint"

    def __init__(self, kernels: KernelFamily, name: str = "kernel"):
        super().__init__(name)
        self.kernels = kernels

    def _bound(self, window):
        return kernel_model_bound(self.kernels, window, name=self.name)

    def next_symbol_set(self, history, schedule):
        m = len(history)
        size = schedule.size(m)
        K = self.kernels.kernel(m, schedule)
        lower = np.zeros(size)
        if K is None:
            return ConditionalSet(lower)
        p = K(history)
        return ConditionalSet(lower, np.asarray(p, dtype=float))


class NoisySensorModel(IncompleteModel):
    """Every observation on an active step has each symbol with probability >= p_min."""

    def __init__(self, p_min: float = 0.1, steps="all", name: str = "noisy-sensor"):
        super().__init__(name)
        if p_min < 0:
            raise ValueError("p_min must be nonnegative")
        self.p_min = float(p_min)
        self.steps = StepSet(steps)

    def _bound(self, window):
        return noisy_sensor_bound(self.p_min, window, self.steps, name=self.name)

    def next_symbol_set(self, history, schedule):
        size = schedule.size(len(history))
        p = self.p_min if len(history) in self.steps else 0.0
        return ConditionalSet(np.full(size, p))


class FiniteFamilyModel(IncompleteModel):
    """Convex hull of explicit measures over ``Ob^N`` (vertex representation)."""

    def __init__(self, vertices: Sequence[FiniteMeasure], name: str = "finite"):
        super().__init__(name)
        self.vertices = list(vertices)

    def _bound(self, window):
        w0 = self.vertices[0].window
        N = w0.n + w0.depth
        if window.n > N:
            return ModelPolytope(window, name=self.name, unbounded_update=True)
        return finite_conditional_bound(self.vertices, window.base, window.depth, name=self.name)


Rule = Callable[[OutcomeWindow], ModelPolytope]


class PolytopeRuleModel(IncompleteModel):
    """Model given directly by a rule ``window -> ModelPolytope``."""

    def __init__(self, rule: Rule, name: str = "rule"):
        super().__init__(name)
        self.rule = rule

    def _bound(self, window):
        return self.rule(window)
