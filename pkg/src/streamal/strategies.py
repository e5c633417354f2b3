"""Stream-based query strategies: random, norm thresholding, CDO, bounded CDO.

Every non-random strategy compares a statistic of the incoming (whitened)
point to thresholds read off a Gaussian KDE of the same statistic over the
calibration set ``V``. The CDO statistics are unscaled prediction variances
``z^T (Z^T Z)^{-1} z`` and are re-thresholded after every new label.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .estimators import DesignState, FittedModel, SingularDesignError
from .numstats import KernelDensity

RANDOM = "random"
NORM = "norm"
CDO = "cdo"
BOUNDED_CDO = "bcdo"
KINDS = (RANDOM, NORM, CDO, BOUNDED_CDO)


class SingularWeightedGramError(SingularDesignError):
    """``Z^T W Z`` cannot be inverted; callers fall back to the plain UPV."""


class ConfigError(ValueError):
    pass


def _quad_forms(Zrows: np.ndarray, A: np.ndarray) -> np.ndarray:
    return np.sum((Zrows @ A) * Zrows, axis=1)


def upv(z, design: DesignState):
    """Unscaled prediction variance of one point, or of each row of a matrix."""
    if design.singular:
        raise SingularDesignError("Gram matrix is singular")
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return float(z @ design.gram_inverse @ z)
    return _quad_forms(z, design.gram_inverse)


def weighted_gram_inverse(design: DesignState, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (design.n,):
        raise ValueError(f"expected {design.n} weights, got shape {w.shape}")
    if np.count_nonzero(w) < design.p:
        raise SingularWeightedGramError("fewer positive weights than features")
    G = (design.Z * w[:, None]).T @ design.Z
    try:
        inv = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise SingularWeightedGramError(str(exc)) from exc
    if not np.all(np.isfinite(inv)):
        raise SingularWeightedGramError("non-finite inverse")
    return inv


def upv_weighted(z, design: DesignState, weights):
    """UPV against the robust-weighted Gram ``Z^T W Z``.

    Unit weights take the unweighted path, so results are bit-identical.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape == (design.n,) and np.all(w == 1.0):
        return upv(z, design)
    A = weighted_gram_inverse(design, w)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return float(z @ A @ z)
    return _quad_forms(z, A)


def _quantile_of(stats, q: float) -> float:
    return KernelDensity.fit(stats).quantile(q)


def estimate_norm_threshold(V, alpha: float) -> float:
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[0] == 0:
        raise ValueError("empty calibration set")
    return _quantile_of(np.linalg.norm(V, axis=1), 1.0 - alpha)


def estimate_cdo_threshold(V, design: DesignState, alpha: float, weights=None) -> float:
    return _quantile_of(_cdo_stats(V, design, weights)[0], 1.0 - alpha)


def estimate_bounds(V, design: DesignState, alpha: float, c: float, weights=None) -> Tuple[float, float]:
    """Interval ``[G1, G2]`` at the ``1-c-alpha`` and ``1-c`` KDE quantiles.

    ``c = 0`` gives ``G2 = inf``, i.e. plain CDO.
    """
    _check_rates(alpha, c)
    kd = KernelDensity.fit(_cdo_stats(V, design, weights)[0])
    hi = np.inf if c == 0 else kd.quantile(1.0 - c)
    return kd.quantile(1.0 - c - alpha), hi


def _check_rates(alpha, c):
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"sampling rate must lie in (0, 1), got {alpha}")
    if not 0.0 <= c < 1.0:
        raise ConfigError(f"cut-off must lie in [0, 1), got {c}")
    if c + alpha >= 1.0:
        raise ConfigError(f"cut-off + sampling rate must be < 1, got {c + alpha}")


def _cdo_stats(Zrows, design: DesignState, weights=None) -> Tuple[np.ndarray, bool]:
    """UPV (or weighted UPV) of each row; second item flags a fallback."""
    Zrows = np.atleast_2d(np.asarray(Zrows, dtype=float))
    if weights is None:
        return upv(Zrows, design), False
    try:
        return upv_weighted(Zrows, design, weights), False
    except SingularWeightedGramError:
        return upv(Zrows, design), True


@dataclass(frozen=True)
class StrategyState:
    """Decision state of one query strategy.

    ``gamma`` is the single threshold of norm/CDO; ``gamma_lo``/``gamma_hi``
    bound the bounded-CDO interval. ``calibration`` is the whitened warm-up
    set used to re-estimate thresholds.
    """

    kind: str
    alpha: float
    c: float = 0.0
    weighted: bool = False
    calibration: Optional[np.ndarray] = None
    gamma: float = float("nan")
    gamma_lo: float = float("nan")
    gamma_hi: float = float("nan")
    n_fallbacks: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy {self.kind!r}; choose from {KINDS}")
        if self.kind == BOUNDED_CDO:
            _check_rates(self.alpha, self.c)
        elif not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"sampling rate must lie in [0, 1], got {self.alpha}")

    @property
    def thresholds(self) -> Tuple[float, ...]:
        if self.kind == BOUNDED_CDO:
            return (self.gamma_lo, self.gamma_hi)
        if self.kind in (NORM, CDO):
            return (self.gamma,)
        return ()


def _weights_for(state: StrategyState, model: Optional[FittedModel]):
    if state.weighted and model is not None:
        return model.weights
    return None


def init_strategy(kind: str, V, design: DesignState, model: Optional[FittedModel] = None,
                  alpha: float = 0.05, c: float = 0.05, weighted: bool = False) -> StrategyState:
    V = None if V is None else np.atleast_2d(np.asarray(V, dtype=float))
    state = StrategyState(kind, alpha, c if kind == BOUNDED_CDO else 0.0, weighted, V)
    if kind == NORM:
        return replace(state, gamma=estimate_norm_threshold(V, alpha))
    return refresh_thresholds(state, design, model)


def refresh_thresholds(state: StrategyState, design: DesignState,
                       model: Optional[FittedModel] = None) -> StrategyState:
    """Re-estimate CDO thresholds against the current design.

    Random and norm-threshold states do not depend on the design and come
    back unchanged.
    """
    if state.kind in (RANDOM, NORM):
        return state
    stats, fell_back = _cdo_stats(state.calibration, design, _weights_for(state, model))
    kd = KernelDensity.fit(stats)
    fallbacks = state.n_fallbacks + int(fell_back)
    if state.kind == CDO:
        return replace(state, gamma=kd.quantile(1.0 - state.alpha), n_fallbacks=fallbacks)
    hi = np.inf if state.c == 0 else kd.quantile(1.0 - state.c)
    lo = kd.quantile(1.0 - state.c - state.alpha)
    return replace(state, gamma_lo=lo, gamma_hi=hi, n_fallbacks=fallbacks)


def statistic(state: StrategyState, Zrows, design: DesignState,
              model: Optional[FittedModel] = None) -> Tuple[np.ndarray, bool]:
    """The decision statistic for each row (NaN for random sampling)."""
    Zrows = np.atleast_2d(np.asarray(Zrows, dtype=float))
    if state.kind == RANDOM:
        return np.full(Zrows.shape[0], np.nan), False
    if state.kind == NORM:
        return np.linalg.norm(Zrows, axis=1), False
    return _cdo_stats(Zrows, design, _weights_for(state, model))


def accept_mask(state: StrategyState, stats, uniforms=None) -> np.ndarray:
    """Vectorised acceptance rule given precomputed statistics.

    ``uniforms`` holds one U(0,1) draw per point and is only read by random
    sampling.
    """
    stats = np.asarray(stats, dtype=float)
    if state.kind == RANDOM:
        return np.asarray(uniforms, dtype=float) >= 1.0 - state.alpha
    if state.kind in (NORM, CDO):
        return stats >= state.gamma
    return (stats >= state.gamma_lo) & (stats <= state.gamma_hi)


def decide(state: StrategyState, z, design: DesignState, model: Optional[FittedModel] = None,
           rng: Optional[np.random.Generator] = None) -> bool:
    """Query the label of ``z``?"""
    if state.kind == RANDOM:
        if rng is None:
            raise ValueError("random sampling needs a generator")
        return bool(rng.random() >= 1.0 - state.alpha)
    stats, _ = statistic(state, z, design, model)
    return bool(accept_mask(state, stats)[0])
