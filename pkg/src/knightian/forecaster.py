"""The dominant forecaster as an online estimator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .gambling import PGGambler, SavvyStrategy, XiMix, ZetaMix
from .market import FixedPointConfig, ForecastStep, aggregate_bet, solve_step
from .observation import DEFAULT_METRIC, AlphabetSchedule, enumerate_window
from .utils.validation import check_ladder, check_positive_int, check_symbols


class DominantForecaster(BaseEstimator):
    """Market forecaster that dominates a ladder of savvy gamblers per model.

    For each precision ``k`` in ``ladder`` and each model, the roster holds
    ``ZetaMix(PGGambler(SavvyStrategy(model, 1/k)))``; the roster is combined
    by :class:`XiMix` with precisions outermost, so every model gets one
    member per weight tier. Each step the forecast is the approximate fixed
    point of the combined bet.

    The estimator is online: :meth:`partial_fit` feeds observed symbols,
    :meth:`forecast` returns the measure for the current history, and
    :meth:`predict_proba` its next-symbol marginal.

    Parameters
    ----------
    models : sequence of IncompleteModel
    ladder : sequence of int
        Precision levels; the gambler for ``k`` uses ``eps = 1/k``.
    alphabet : int or sequence of int
        Alphabet sizes per step.
    horizon : int
        Depth of the forecast window.
    metric : MetricFamily, optional
    b_max : int
        Truncation of the budget mixture.
    solver : FixedPointConfig, optional
    random_state : int
        Seed for randomized solver restarts.
    """

    def __init__(self, models=(), ladder=(1, 2, 4, 8), alphabet=2, horizon=4, metric=None,
                 b_max=64, solver=None, random_state=0):
        self.models = models
        self.ladder = ladder
        self.alphabet = alphabet
        self.horizon = horizon
        self.metric = metric
        self.b_max = b_max
        self.solver = solver
        self.random_state = random_state

    # -- state ---------------------------------------------------------------

    def _reset(self):
        check_positive_int(self.horizon, "horizon")
        check_positive_int(self.b_max, "b_max")
        ladder = check_ladder(self.ladder)
        self.schedule_ = AlphabetSchedule(self.alphabet, self.horizon)
        self.metric_ = self.metric if self.metric is not None else DEFAULT_METRIC
        self.solver_ = self.solver if self.solver is not None else FixedPointConfig()
        self.models_ = list(self.models)
        self.members_ = []
        for k in ladder:
            for model in self.models_:
                pg = PGGambler(SavvyStrategy(model, 1.0 / k, self.metric_), self.schedule_)
                self.members_.append((model.name, k, ZetaMix(pg, self.b_max)))
        self.roster_ = XiMix([g for _, _, g in self.members_], self.schedule_) if self.members_ else None
        self._rng = np.random.default_rng(self.random_state)
        self.history_ = []
        self.steps_ = []
        self._pending = None

    def _ensure(self):
        if not hasattr(self, "history_"):
            self._reset()

    @property
    def n_steps_(self) -> int:
        return len(self.history_)

    # -- online protocol -----------------------------------------------------------

    def forecast(self) -> ForecastStep:
        """Clear the market for the current history (idempotent until the next symbol)."""
        self._ensure()
        if self._pending is not None:
            return self._pending
        window = enumerate_window(self.history_, self.horizon, self.schedule_)
        bet = aggregate_bet(self.roster_, window)
        step = solve_step(bet, window, self.solver_, len(self.history_), self._rng)
        mu = step.forecast
        if self.roster_ is not None:
            v = self.roster_.settle(mu)
            step.snapshots["fairness"] = abs(float(mu.weights @ v))
        for model in self.models_:
            step.distances[model.name] = model.bound(window).distance(mu, self.metric_)[0]
        step.snapshots.update(self._snapshot())
        self._pending = step
        return step

    def _snapshot(self) -> dict:
        out = {}
        if self.roster_ is None:
            return out
        out["aggregate"] = (self.roster_.ledger.svm, self.roster_.ledger.svx)
        for i, (_, _, z) in enumerate(self.members_):
            pg = z.inner
            out[i] = {
                "pg": (pg.ledger.svm, pg.ledger.svx),
                "playing": pg.playing and i in self.roster_.live(),
                "zeta": (z.ledger.svm, z.ledger.svx),
                "margin": z.budget_margin(),
            }
        return out

    def observe(self, symbol: int) -> ForecastStep:
        """Record the next symbol; returns the step that forecast it."""
        step = self.forecast()
        symbol = int(check_symbols([symbol], self.schedule_, len(self.history_))[0])
        if self.roster_ is not None:
            self.roster_.reveal(symbol)
        self.history_.append(symbol)
        self.steps_.append(step)
        self._pending = None
        return step

    # -- estimator API -------------------------------------------------------------

    def partial_fit(self, X, y=None):
        self._ensure()
        for s in check_symbols(X, self.schedule_, len(self.history_)):
            self.observe(int(s))
        return self

    def fit(self, X, y=None):
        self._reset()
        return self.partial_fit(X)

    def predict_proba(self, X=None) -> np.ndarray:
        """Next-symbol probabilities after the observed history (``X`` is ignored)."""
        return self.forecast().forecast.next_symbol_probs()[None, :]

    def predict(self, X=None) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def distance_series(self, name: str) -> np.ndarray:
        return np.array([s.distances[name] for s in self.steps_])


def dominant_forecaster(models, ladder=(1, 2, 4, 8), **kw) -> DominantForecaster:
    return DominantForecaster(models=models, ladder=ladder, **kw)
