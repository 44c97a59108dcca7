"""Probability measures on outcome windows: conditioning, kernels, semidirect products."""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .observation import OutcomeWindow

SUM_TOL = 1e-9


class ConditioningError(ValueError):
    """Raised when conditioning on a cylinder of zero probability."""


class FiniteMeasure:
    """A probability vector over the completions of an :class:`OutcomeWindow`.

    Support containment in the cylinder of the window's base history is
    structural: there is simply no coordinate outside it.
    """

    __slots__ = ("window", "weights")

    def __init__(self, window: OutcomeWindow, weights, *, tol: float = SUM_TOL):
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape != (window.size,):
            raise ValueError(f"expected {window.size} weights for {window}, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < -tol):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if abs(total - 1.0) > tol:
            raise ValueError(f"weights sum to {total!r}, not 1")
        w = np.clip(w, 0.0, None)
        w = w / w.sum()
        w.setflags(write=False)
        self.window = window
        self.weights = w

    @classmethod
    def uniform(cls, window: OutcomeWindow) -> FiniteMeasure:
        return cls(window, np.full(window.size, 1.0 / window.size))

    @classmethod
    def dirac(cls, window: OutcomeWindow, completion: Sequence[int]) -> FiniteMeasure:
        w = np.zeros(window.size)
        w[window.index(completion)] = 1.0
        return cls(window, w)

    @property
    def tensor(self) -> np.ndarray:
        return self.weights.reshape(self.window.shape)

    def marginal(self, depth: int) -> np.ndarray:
        """Probabilities of the first ``depth`` appended symbols, flattened."""
        if not 0 <= depth <= self.window.depth:
            raise ValueError(f"depth {depth} outside window depth {self.window.depth}")
        t = self.tensor
        return t.sum(axis=tuple(range(depth, self.window.depth))).reshape(-1)

    def next_symbol_probs(self) -> np.ndarray:
        return self.marginal(1)

    def mass(self, prefix: Sequence[int]) -> float:
        return float(self.weights[self.window.cylinder_mask(prefix)].sum())

    def __repr__(self):
        return f"FiniteMeasure({self.window!r}, weights={np.round(self.weights, 6).tolist()})"


def dirac(window: OutcomeWindow, completion: Sequence[int]) -> FiniteMeasure:
    return FiniteMeasure.dirac(window, completion)


def expectation(mu: FiniteMeasure, f) -> float:
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.shape != mu.weights.shape:
        raise ValueError(f"payoff of shape {f.shape} does not match window of size {mu.window.size}")
    return float(mu.weights @ f)


def condition(mu: FiniteMeasure, y: Sequence[int]) -> FiniteMeasure:
    """Bayes-condition ``mu`` on the cylinder of ``y``.

    The result lives on the window with base ``y`` ending at the same horizon.
    """
    win = mu.window
    y = win.schedule.check_history(y)
    mask = win.cylinder_mask(y)
    mass = mu.weights[mask].sum()
    if mass <= 0.0:
        raise ConditioningError(f"history {list(y)} has zero probability under the measure")
    out = OutcomeWindow(win.schedule, y, win.depth - (len(y) - win.n))
    return FiniteMeasure(out, mu.weights[mask] / mass)


class KernelSpec:
    """A Markov kernel ``Ob^step -> P(Ob_step)``.

    ``table`` is either a mapping from history tuples to probability vectors
    or a callable ``history -> probs``. Rows are checked to be stochastic when
    first evaluated.
    """

    def __init__(self, step: int, table: Mapping | Callable, size: int):
        self.step = int(step)
        self.size = int(size)
        self._table = table
        self._rows: dict = {}

    def __call__(self, history: Sequence[int]) -> np.ndarray:
        history = tuple(int(s) for s in history)
        if len(history) != self.step:
            raise ValueError(
                f"kernel at step {self.step} applied to history of length {len(history)}"
            )
        row = self._rows.get(history)
        if row is None:
            if callable(self._table):
                row = self._table(history)
            else:
                row = self._table[history]
            row = np.asarray(row, dtype=float).reshape(-1)
            if row.shape != (self.size,) or np.any(row < 0) or abs(row.sum() - 1.0) > SUM_TOL:
                raise ValueError(f"kernel row at {history} is not a probability vector: {row}")
            row.setflags(write=False)
            if len(self._rows) < 4096:
                self._rows[history] = row
        return row

    def __repr__(self):
        return f"KernelSpec(step={self.step}, size={self.size})"


def semidirect(mu: FiniteMeasure, kernel: KernelSpec) -> FiniteMeasure:
    """``mu ⋉ K``: append one symbol drawn from ``kernel`` given the full prefix."""
    win = mu.window
    step = win.n + win.depth
    if kernel.step != step:
        raise ValueError(f"kernel acts at step {kernel.step}, measure ends at step {step}")
    if kernel.size != win.schedule.size(step):
        raise ValueError("kernel alphabet does not match the schedule")
    rows = np.stack([kernel(c) for c in win.completions])
    out = OutcomeWindow(win.schedule, win.base, win.depth + 1)
    return FiniteMeasure(out, (mu.weights[:, None] * rows).reshape(-1))


def extend_uniform(mu: FiniteMeasure) -> FiniteMeasure:
    """Append one symbol drawn uniformly, independent of the past."""
    win = mu.window
    k = win.schedule.size(win.n + win.depth)
    out = OutcomeWindow(win.schedule, win.base, win.depth + 1)
    return FiniteMeasure(out, np.repeat(mu.weights, k) / k)
