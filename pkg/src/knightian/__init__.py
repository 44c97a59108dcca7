"""Online forecasting with incomplete models.

A forecaster that prices a market of gamblers, each betting that the
forecast is far (in Kantorovich-Rubinstein distance) from one of a list of
convex model sets. Forecasts are approximate fixed points of the combined
bet, so every gambler with a bounded budget has bounded winnings.
"""

from .forecaster import DominantForecaster, dominant_forecaster
from .gambling import (
    Bet,
    BudgetGambler,
    CylinderBet,
    Ledger,
    PGGambler,
    SavvyStrategy,
    XiMix,
    ZetaMix,
    budget_wrap,
    payoff_V,
    pg_wrap,
    savvy_strategy,
    xi_mix,
    zeta_mix,
)
from .geometry import (
    LipschitzFunction,
    ModelPolytope,
    distance_to_model,
    kr_distance,
    lipschitz_norm,
    verify_lipschitz_ball,
    violation,
)
from .market import FixedPointConfig, ForecastStep, aggregate_bet, solve_step
from .measure import ConditioningError, FiniteMeasure, KernelSpec, condition, expectation, semidirect
from .models import (
    FiniteFamilyModel,
    KernelModel,
    NoisySensorModel,
    finite_conditional_bound,
    kernel_model_bound,
    noisy_sensor_bound,
)
from .observation import AlphabetSchedule, GeometricMetric, OutcomeWindow, enumerate_window, rho_n

__version__ = "0.1.0"
