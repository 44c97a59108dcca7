"""Per-step market clearing: find a forecast against which the aggregate bet cannot win."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gambling import Bet, Gambler, ZeroBet
from .measure import FiniteMeasure
from .observation import OutcomeWindow


@dataclass(frozen=True)
class FixedPointConfig:
    """Solver settings.

    The per-step tolerance is ``max(tau0 * 2**(-n/2), tau_floor)``; its
    floor keeps the schedule attainable in double precision (the summed slack
    then grows by ``tau_floor`` per step, see ``slack_bound``).
    """

    tau0: float = 1e-3
    tau_floor: float = 1e-7
    max_iter: int = 300
    restarts: int = 4
    eta0: float = 1.0
    eta_max: float = 64.0
    eta_min: float = 1e-4
    backtrack: float = 0.5

    def __post_init__(self):
        if not (self.tau0 > 0 and self.tau_floor >= 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.restarts < 1:
            raise ValueError("max_iter and restarts must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not 0 < self.eta_min <= self.eta0 <= self.eta_max:
            raise ValueError("need 0 < eta_min <= eta0 <= eta_max")

    def tau(self, n: int) -> float:
        return max(self.tau0 * 2.0 ** (-n / 2.0), self.tau_floor)

    def slack_bound(self, n_steps: int) -> float:
        """Upper bound on ``sum_{n < n_steps} tau(n)``."""
        return float(sum(self.tau(n) for n in range(n_steps)))


@dataclass
class ForecastStep:
    n: int
    history: tuple[int, ...]
    forecast: FiniteMeasure
    residual: float
    tau: float
    converged: bool
    iterations: int = 0
    restart: int = 0
    distances: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return not self.converged


def residual(beta: Bet, mu: FiniteMeasure) -> float:
    """``max_x beta(mu, x) - E_mu beta(mu)``: how much the bet still gains on its best outcome."""
    b = beta(mu)
    return max(float(b.max() - mu.weights @ b), 0.0)


def _restart_points(beta: Bet, window: OutcomeWindow, count: int, rng):
    k = window.size
    uni = np.full(k, 1.0 / k)
    yield uni
    if count == 1:
        return
    b = beta(FiniteMeasure(window, uni))
    order = np.argsort(-b, kind="stable")
    made = 1
    for i in order[: count - 1]:
        w = 0.5 * uni.copy()
        w[i] += 0.5
        yield w
        made += 1
    while made < count:
        gen = rng if rng is not None else np.random.default_rng(made)
        yield gen.dirichlet(np.ones(k))
        made += 1


def _mw_descent(beta: Bet, window: OutcomeWindow, w0: np.ndarray, tau: float, cfg: FixedPointConfig):
    """Damped multiplicative weights with backtracking on the residual.

    Returns ``(weights, residual, iterations)`` for the best iterate seen.
    """
    mu = FiniteMeasure(window, w0)
    res = residual(beta, mu)
    best = (res, mu)
    eta = cfg.eta0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if res <= tau:
            break
        b = beta(mu)
        top = b.max()
        span = top - b.min()
        if span <= 0:
            break
        g = (b - top) / span
        while True:
            w = mu.weights * np.exp(eta * g)
            cand = FiniteMeasure(window, w / w.sum())
            cres = residual(beta, cand)
            if cres < res or eta <= cfg.eta_min:
                break
            eta *= cfg.backtrack
        mu, res = cand, cres
        if res < best[0]:
            best = (res, mu)
        eta = min(eta * 2.0, cfg.eta_max)
    return best[1], best[0], it


def solve_step(beta: Bet, window: OutcomeWindow, cfg: FixedPointConfig | None = None,
               n: int | None = None, rng=None) -> ForecastStep:
    """Approximate fixed point: a forecast on which ``beta`` has residual at most ``tau(n)``.

    Restarts run in a fixed order (uniform, then half-Dirac corners ranked by
    the bet at uniform, then seeded random points); the first one reaching
    tolerance wins. If none does, the best iterate is returned flagged.
    """
    cfg = cfg if cfg is not None else FixedPointConfig()
    n = window.n if n is None else n
    tau = cfg.tau(n)
    uniform = FiniteMeasure.uniform(window)
    if beta.is_zero:
        return ForecastStep(n, window.base, uniform, 0.0, tau, True)
    best = None
    total = 0
    for k, w0 in enumerate(_restart_points(beta, window, cfg.restarts, rng)):
        mu, res, its = _mw_descent(beta, window, w0, tau, cfg)
        total += its
        if res <= tau:
            return ForecastStep(n, window.base, mu, res, tau, True, total, k)
        cand = (res, tuple(mu.weights), k, mu)
        if best is None or cand[:2] < best[:2]:
            best = cand
    res, _, k, mu = best
    return ForecastStep(n, window.base, mu, res, tau, False, total, k)


def aggregate_bet(roster: Gambler | None, window: OutcomeWindow) -> Bet:
    """The market's bet for this step: the mixed roster's proposal, or zero without a roster."""
    if roster is None:
        return ZeroBet(window)
    return roster.propose(window)
