"""Robust online active learning for linear regression on contaminated streams."""

from .estimators import HUBER, OLS, TUKEY, DesignState, FittedModel, LossKind
from .harness import AggregateResult, RunResult, StrategySpec, run_replicated, run_single
from .stream import ScenarioConfig

__all__ = [
    "AggregateResult",
    "DesignState",
    "FittedModel",
    "HUBER",
    "LossKind",
    "OLS",
    "RunResult",
    "ScenarioConfig",
    "StrategySpec",
    "TUKEY",
    "run_replicated",
    "run_single",
]

__version__ = "0.1.0"
