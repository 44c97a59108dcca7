"""Bets, ledgers, gamblers and the operators that bound their exposure."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .geometry import LipschitzFunction, ModelPolytope
from .measure import FiniteMeasure
from .models import IncompleteModel
from .observation import DEFAULT_METRIC, AlphabetSchedule, MetricFamily, OutcomeWindow

FAIR_TOL = 1e-9


def _weights(mu) -> np.ndarray:
    return mu.weights if isinstance(mu, FiniteMeasure) else np.asarray(mu, dtype=float)


# -- bets -------------------------------------------------------------------------


class Bet:
    """Payoff vector over a window as a (continuous) function of the forecast.

    Subclasses implement :meth:`evaluate`; calls are memoized on the most
    recent forecast so composite bets can share work.
    """

    def __init__(self, window: OutcomeWindow):
        self.window = window
        self._last = None

    def evaluate(self, mu: FiniteMeasure) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, mu: FiniteMeasure) -> np.ndarray:
        if mu.window != self.window:
            raise ValueError("forecast and bet live on different windows")
        key = mu.weights.tobytes()
        if self._last is not None and self._last[0] == key:
            return self._last[1]
        out = np.asarray(self.evaluate(mu), dtype=float).reshape(-1)
        if out.shape != (self.window.size,):
            raise ValueError("bet returned a payoff of the wrong size")
        self._last = (key, out)
        return out

    @property
    def is_zero(self) -> bool:
        return False


class ZeroBet(Bet):
    def evaluate(self, mu):
        return np.zeros(self.window.size)

    @property
    def is_zero(self):
        return True


class ConstantBet(Bet):
    """A payoff that ignores the forecast."""

    def __init__(self, window, values):
        super().__init__(window)
        self.values = np.asarray(values, dtype=float).reshape(-1)

    def evaluate(self, mu):
        return self.values


class FunctionBet(Bet):
    def __init__(self, window, fn: Callable[[FiniteMeasure], np.ndarray]):
        super().__init__(window)
        self.fn = fn

    def evaluate(self, mu):
        return self.fn(mu)


class CylinderBet(ConstantBet):
    """Buy one share of the event "the next symbols are ``prefix``"."""

    def __init__(self, window, prefix: Sequence[int]):
        super().__init__(window, window.cylinder_mask(tuple(window.base) + tuple(prefix)).astype(float))


class ScaledBet(Bet):
    """``scale(mu) * inner(mu)``, with the scale possibly depending on the forecast."""

    def __init__(self, inner: Bet, scale: Callable[[FiniteMeasure], float] | float):
        super().__init__(inner.window)
        self.inner = inner
        self.scale = scale

    def evaluate(self, mu):
        s = self.scale(mu) if callable(self.scale) else self.scale
        return s * self.inner(mu) if s else np.zeros(self.window.size)

    @property
    def is_zero(self):
        return self.inner.is_zero or (not callable(self.scale) and self.scale == 0)


def payoff_V(beta: Bet, mu: FiniteMeasure) -> np.ndarray:
    """Payoff of ``beta`` against forecast ``mu`` after charging its ``mu``-price."""
    b = beta(mu)
    w = mu.weights
    return b - float(w @ b)


# -- ledger ---------------------------------------------------------------------------


class Ledger:
    """Running account of V-payoffs for one gambler (or a batch of them).

    ``realized`` collects payoffs whose outcome is fully known; ``pending``
    holds ``(step, tensor)`` pairs over the positions that are still
    unrevealed. ``values()`` is the joint payoff over the current window of
    unrevealed positions, from which SVM/SVX follow by exact enumeration.
    A nonempty ``batch`` shape prepends independent accounts.
    """

    def __init__(self, schedule: AlphabetSchedule, batch: tuple[int, ...] = ()):
        self.schedule = schedule
        self.batch = tuple(batch)
        self.n = 0
        self.realized = np.zeros(self.batch)
        self.pending: list[tuple[int, np.ndarray]] = []

    def add(self, payoff, window: OutcomeWindow) -> None:
        if window.n != self.n:
            raise ValueError(f"ledger is at step {self.n}, payoff is for step {window.n}")
        t = np.asarray(payoff, dtype=float).reshape(self.batch + window.shape)
        if window.depth == 0:
            self.realized = self.realized + t
        elif np.any(t):
            self.pending.append((window.n, t))

    def reveal(self, symbol: int) -> None:
        if not 0 <= symbol < self.schedule.size(self.n):
            raise ValueError(f"symbol {symbol} out of range at step {self.n}")
        axis = (slice(None),) * len(self.batch) + (int(symbol),)
        still = []
        for m, t in self.pending:
            t = t[axis]
            if t.ndim == len(self.batch):
                self.realized = self.realized + t
            else:
                still.append((m, t))
        self.pending = still
        self.n += 1

    def values(self) -> np.ndarray:
        """SV over the joint unrevealed positions (batch axes first)."""
        nb = len(self.batch)
        depth = max((t.ndim - nb for _, t in self.pending), default=0)
        out = np.broadcast_to(
            self.realized.reshape(self.batch + (1,) * depth), self.batch + self.schedule.shape(self.n, depth)
        ).copy()
        for _, t in self.pending:
            out += t.reshape(t.shape + (1,) * (depth - (t.ndim - nb)))
        return out

    def _reduce(self, fn):
        v = self.values()
        nb = len(self.batch)
        return fn(v.reshape(self.batch + (-1,)), axis=nb) if nb else float(fn(v))

    @property
    def svm(self):
        return self._reduce(np.min)

    @property
    def svx(self):
        return self._reduce(np.max)

    @property
    def span(self):
        return self.svx - self.svm

    def values_over(self, window: OutcomeWindow) -> np.ndarray:
        """Current SV broadcast onto ``window`` (which starts at the ledger's step), flattened."""
        if window.n != self.n:
            raise ValueError("window does not start at the ledger's step")
        v = self.values()
        nb = len(self.batch)
        d = v.ndim - nb
        if d > window.depth:
            raise ValueError("pending payoffs reach past the window")
        v = v.reshape(v.shape + (1,) * (window.depth - d))
        return np.broadcast_to(v, self.batch + window.shape).reshape(self.batch + (window.size,))


def replay_ledger(schedule: AlphabetSchedule, payoffs: Sequence[tuple[OutcomeWindow, np.ndarray]],
                  path: Sequence[int]) -> Ledger:
    """Rebuild a ledger from scratch: payoff ``k`` is added at step ``k`` and
    symbol ``path[k]`` revealed after it (as far as ``path`` goes)."""
    led = Ledger(schedule)
    for k, (w, p) in enumerate(payoffs):
        led.add(p, w)
        if k < len(path):
            led.reveal(path[k])
    return led


# -- strategies --------------------------------------------------------------------


class SavvyBet(Bet):
    """``(r - eps)_+ * f`` where ``(r, f)`` is the distance/witness of the forecast to a model bound."""

    def __init__(self, polytope: ModelPolytope, eps: float, metric: MetricFamily):
        super().__init__(polytope.window)
        self.polytope = polytope
        self.eps = eps
        self.metric = metric

    def certificate(self, mu) -> tuple[float, LipschitzFunction]:
        return self.polytope.distance(mu, self.metric)

    def evaluate(self, mu):
        r, f = self.certificate(mu)
        scale = max(r - self.eps, 0.0)
        return scale * f.values if scale > 0 else np.zeros(self.window.size)


class GamblingStrategy:
    """History-indexed bets with a uniform bound on their norm."""

    uniform_bound = 0.0

    def propose(self, window: OutcomeWindow) -> Bet:
        raise NotImplementedError


class ZeroStrategy(GamblingStrategy):
    def propose(self, window):
        return ZeroBet(window)


class SavvyStrategy(GamblingStrategy):
    """Bets against forecasts farther than ``eps`` from the model bound, along the separating witness."""

    uniform_bound = 2.0

    def __init__(self, model: IncompleteModel, eps: float, metric: MetricFamily | None = None):
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.model = model
        self.eps = float(eps)
        self.metric = metric if metric is not None else DEFAULT_METRIC

    def propose(self, window):
        return SavvyBet(self.model.bound(window), self.eps, self.metric)

    def __repr__(self):
        return f"SavvyStrategy({self.model.name!r}, eps={self.eps:g})"


def savvy_strategy(model: IncompleteModel, eps: float, metric: MetricFamily | None = None) -> SavvyStrategy:
    return SavvyStrategy(model, eps, metric)


# -- gamblers ------------------------------------------------------------------------


class Gambler:
    """Stateful bettor: ``propose`` a bet for the current window, ``settle`` it at the
    market forecast, then ``reveal`` the observed symbol.

    State is a pure function of the observed history and past forecasts, so
    a run can be replayed exactly.
    """

    def __init__(self, schedule: AlphabetSchedule):
        self.schedule = schedule
        self.ledger = Ledger(schedule)
        self.n = 0
        self._bet: Bet | None = None

    def _propose(self, window: OutcomeWindow) -> Bet:
        raise NotImplementedError

    def propose(self, window: OutcomeWindow) -> Bet:
        if window.n != self.n:
            raise ValueError(f"gambler is at step {self.n}, asked to bet at step {window.n}")
        if self._bet is not None:
            raise RuntimeError("previous bet has not been settled")
        self._bet = self._propose(window)
        return self._bet

    def settle(self, forecast: FiniteMeasure) -> np.ndarray:
        """Charge the proposed bet at ``forecast`` and book it; returns the V-payoff."""
        if self._bet is None:
            raise RuntimeError("no bet to settle")
        v = payoff_V(self._bet, forecast)
        self.ledger.add(v, forecast.window)
        self._settled(forecast, v)
        self._bet = None
        return v

    def _settled(self, forecast, v):
        pass

    def reveal(self, symbol: int) -> None:
        if self._bet is not None:
            raise RuntimeError("cannot reveal before settling the current bet")
        self.ledger.reveal(symbol)
        self._revealed(symbol)
        self.n += 1

    def _revealed(self, symbol):
        pass


class ScriptedGambler(Gambler):
    """Plays ``bets[n](window)`` at step ``n`` (zero after the script ends); for tests and fuzzing."""

    def __init__(self, schedule, bets: Sequence[Callable[[OutcomeWindow], Bet]]):
        super().__init__(schedule)
        self.bets = list(bets)

    def _propose(self, window):
        return self.bets[self.n](window) if self.n < len(self.bets) else ZeroBet(window)


class PGGambler(Gambler):
    """Plays the strategy only while its outstanding uncertainty ``SVX - SVM`` is at most 1."""

    def __init__(self, strategy: GamblingStrategy, schedule: AlphabetSchedule, threshold: float = 1.0):
        super().__init__(schedule)
        self.strategy = strategy
        self.threshold = threshold
        self._span = 0.0
        self.playing = True

    def _propose(self, window):
        self.playing = self._span <= self.threshold
        return self.strategy.propose(window) if self.playing else ZeroBet(window)

    def _settled(self, forecast, v):
        # uncertainty seen by the next step: after this bet, before the next symbol
        self._span = self.ledger.span


def pg_wrap(strategy: GamblingStrategy, schedule: AlphabetSchedule) -> PGGambler:
    return PGGambler(strategy, schedule)


def _budget_factors(v: np.ndarray, sv: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    """Largest scalings ``<= 1`` keeping ``sv + s * v >= -b`` on the window, per budget."""
    need = np.max(-v[None, :] / (sv + budgets[:, None]), axis=1)
    return 1.0 / np.maximum(1.0, need)


class BudgetGambler(Gambler):
    """Scale the inner gambler's bets so its account never drops below ``-b``;
    stop for good once the inner account's worst case reaches ``-b``."""

    def __init__(self, inner: Gambler, b: float):
        if not b > 0:
            raise ValueError("budget must be positive")
        super().__init__(inner.schedule)
        self.inner = inner
        self.b = float(b)
        self.active = True
        self.factor = 1.0

    def _propose(self, window):
        inner_bet = self.inner.propose(window)
        if not self.active:
            return ScaledBet(inner_bet, 0.0)
        sv = self.inner.ledger.values_over(window)
        budgets = np.array([self.b])

        def scale(mu):
            return float(_budget_factors(payoff_V(inner_bet, mu), sv, budgets)[0])

        return ScaledBet(inner_bet, scale)

    def settle(self, forecast):
        bet = self._bet
        v = super().settle(forecast)
        self.factor = float(bet.scale(forecast)) if callable(bet.scale) else float(bet.scale)
        return v

    def _settled(self, forecast, v):
        self.inner.settle(forecast)
        if self.inner.ledger.svm <= -self.b:
            self.active = False

    def _revealed(self, symbol):
        self.inner.reveal(symbol)


def budget_wrap(inner: Gambler, b: float) -> BudgetGambler:
    return BudgetGambler(inner, b)


def zeta_weights(b_max: int) -> np.ndarray:
    b = np.arange(1, b_max + 1, dtype=float)
    return b ** -3.0


class ZetaMix(Gambler):
    """``sum_{b <= b_max} b^-3 * Bd_b(inner)`` with all budgets sharing one inner gambler.

    Each budgeted copy is tracked in ``bank`` (a batched ledger) so its floor
    can be audited; the mixture's own ledger is the weighted sum.
    """

    def __init__(self, inner: Gambler, b_max: int = 64):
        super().__init__(inner.schedule)
        self.inner = inner
        self.b_max = int(b_max)
        self.budgets = np.arange(1, self.b_max + 1, dtype=float)
        self.weights = zeta_weights(self.b_max)
        self.active = np.ones(self.b_max, dtype=bool)
        self.bank = Ledger(inner.schedule, batch=(self.b_max,))
        self._sv = None
        self._inner_bet = None

    @property
    def floor(self) -> float:
        return -float(self.weights @ self.budgets)

    def factors(self, mu) -> np.ndarray:
        """Per-budget scalings of the inner bet at forecast ``mu`` (zero once a budget is exhausted)."""
        out = np.zeros(self.b_max)
        if self.active.any():
            v = payoff_V(self._inner_bet, mu)
            out[self.active] = _budget_factors(v, self._sv, self.budgets[self.active])
        return out

    def _propose(self, window):
        self._inner_bet = self.inner.propose(window)
        self._sv = self.inner.ledger.values_over(window)
        if not self.active.any() or self._inner_bet.is_zero:
            return ScaledBet(self._inner_bet, 0.0)
        return ScaledBet(self._inner_bet, lambda mu: float(self.weights @ self.factors(mu)))

    def _settled(self, forecast, v):
        inner_v = self.inner.settle(forecast)
        f = self.factors(forecast)
        self.bank.add(f[:, None] * inner_v[None, :], forecast.window)
        self.active &= self.inner.ledger.svm > -self.budgets

    def _revealed(self, symbol):
        self.inner.reveal(symbol)
        self.bank.reveal(symbol)

    def budget_margin(self) -> float:
        """``min_b (SVM Bd_b + b)``; nonnegative whenever every budget holds."""
        return float(np.min(self.bank.svm + self.budgets))


def zeta_mix(inner: Gambler, b_max: int = 64) -> ZetaMix:
    return ZetaMix(inner, b_max)


def xi_weight(k: int) -> float:
    return (k + 1) ** -2.0


class XiMix(Gambler):
    """``sum_k (k+1)^-2 G^k``, where member ``k`` joins at step ``k``."""

    def __init__(self, members: Sequence[Gambler], schedule: AlphabetSchedule | None = None):
        if not members and schedule is None:
            raise ValueError("an empty mixture needs an explicit schedule")
        super().__init__(schedule if schedule is not None else members[0].schedule)
        self.members = list(members)
        self.weights = np.array([xi_weight(k) for k in range(len(self.members))])
        self._bets: list[Bet] = []

    def live(self) -> list[int]:
        return [k for k in range(len(self.members)) if k <= self.n]

    def _propose(self, window):
        live = self.live()
        self._bets = [self.members[k].propose(window) for k in live]
        bets = [(self.weights[k], b) for k, b in zip(live, self._bets) if not b.is_zero]
        if not bets:
            return ZeroBet(window)
        return FunctionBet(window, lambda mu: sum(w * b(mu) for w, b in bets))

    def _settled(self, forecast, v):
        for k in self.live():
            self.members[k].settle(forecast)

    def _revealed(self, symbol):
        # members that have not joined yet still follow the history
        for m in self.members:
            m.reveal(symbol)

    @property
    def floor(self) -> float:
        return sum(w * getattr(m, "floor", -math.inf) for w, m in zip(self.weights, self.members))


def xi_mix(members: Sequence[Gambler], schedule: AlphabetSchedule | None = None) -> XiMix:
    return XiMix(members, schedule)
