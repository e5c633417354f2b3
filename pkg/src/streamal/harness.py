"""Fixed-budget online active learning runs and Monte-Carlo replication.

One run follows the bounded-CDO loop for any strategy/estimator pair: the
first ``warm_up`` stream points form the unlabeled calibration set, which
fixes the whitening map and the initial thresholds; afterwards each
incoming point is whitened and either labeled (design augmented, model
refitted, thresholds refreshed) or discarded, until the budget is spent.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import strategies as st
from .estimators import (
    DegenerateLeverageError,
    DesignState,
    LossKind,
    SingularDesignError,
    augment,
    fit,
    loo_cv,
    loss_from_name,
    predict,
    rmse,
)
from .stream import (
    BLOCK,
    ObservationStream,
    ScenarioConfig,
    draw_betas,
    gen_initial_design,
    gen_test_set,
    replica_generators,
)
from .whitening import fit_from_calibration, whiten

CHUNK = 64
STABILIZATION_WINDOW = 3
MAX_INIT_ATTEMPTS = 6


@dataclass(frozen=True)
class StrategySpec:
    """A query strategy paired with an estimator."""

    kind: str
    loss: str = "ols"
    weighted: bool = False

    def __post_init__(self):
        if self.kind not in st.KINDS:
            raise st.ConfigError(f"unknown strategy {self.kind!r}; choose from {', '.join(st.KINDS)}")
        if self.loss not in ("ols", "huber", "tukey"):
            raise st.ConfigError(f"unknown estimator {self.loss!r}")

    @property
    def label(self) -> str:
        return f"{self.kind}-{self.loss}" + ("-w" if self.weighted else "")

    def loss_kind(self, config: ScenarioConfig) -> LossKind:
        k = {"huber": config.huber_k, "tukey": config.tukey_k}.get(self.loss)
        return loss_from_name(self.loss, k)

    @classmethod
    def parse(cls, text: str) -> "StrategySpec":
        """``kind[:loss[:weighted]]``, e.g. ``bcdo:huber:weighted``."""
        parts = [t.strip().lower() for t in text.split(":") if t.strip()]
        if not parts or len(parts) > 3:
            raise st.ConfigError(f"bad strategy {text!r}")
        weighted = False
        if len(parts) == 3:
            if parts[2] not in ("weighted", "w", "upvw"):
                raise st.ConfigError(f"bad strategy flag {parts[2]!r} in {text!r}")
            weighted = True
        return cls(parts[0], parts[1] if len(parts) > 1 else "ols", weighted)

    def __str__(self):
        return f"{self.kind}:{self.loss}" + (":weighted" if self.weighted else "")


class UniformTape:
    """One U(0,1) draw per stream index, generated in aligned blocks."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._vals = np.empty(0)

    def get(self, start: int, n: int) -> np.ndarray:
        while self._vals.size < start + n:
            self._vals = np.concatenate([self._vals, self._rng.random(BLOCK)])
        return self._vals[start:start + n]


@dataclass
class RunResult:
    rmse_curve: np.ndarray
    labels_spent: int
    stream_position: int
    outliers_sampled: int
    stabilization_curve: np.ndarray
    loocv_curve: np.ndarray
    accept_positions: List[int]
    accepted_outliers: List[bool] = field(default_factory=list)
    calibration_outliers: int = 0
    initial_outliers: int = 0
    n_fallbacks: int = 0
    stopped_early: bool = False
    trace: Optional[List[tuple]] = None


def stabilization_score(history: Sequence[np.ndarray], window: int = STABILIZATION_WINDOW) -> float:
    """Mean over the ``window`` latest model pairs of the summed squared
    prediction change on the calibration set; NaN until ``window + 1``
    models exist."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(history) < window + 1:
        return math.nan
    recent = [np.asarray(h, dtype=float) for h in history[-(window + 1):]]
    return float(np.mean([np.sum((b - a) ** 2) for a, b in zip(recent[:-1], recent[1:])]))


def stopping_diagnostics(history: Sequence[np.ndarray], design: DesignState, loss: LossKind,
                         window: int = STABILIZATION_WINDOW) -> Tuple[float, float]:
    """(stabilization score, LOO-CV RMSE) for the current state; NaN where undefined."""
    try:
        loo = loo_cv(design, loss)
    except (ValueError, SingularDesignError, DegenerateLeverageError):
        loo = math.nan
    return stabilization_score(history, window), loo


def _expand(Z: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    if config.intercept:
        return np.hstack([np.ones((Z.shape[0], 1)), Z])
    return Z


def run_single(config: ScenarioConfig, strategy: StrategySpec, replica: int = 0, *,
               diagnostics: bool = False, trace: bool = False, stop_tol: Optional[float] = None,
               window: int = STABILIZATION_WINDOW) -> RunResult:
    """Run one replica of the fixed-budget loop.

    Every strategy run with the same ``(config.seed, replica)`` sees the same
    betas, calibration set, initial design, test set and stream.
    """
    loss = strategy.loss_kind(config)
    gens = replica_generators(config.seed, replica)
    betas = draw_betas(gens.betas, config)
    stream = ObservationStream(config, betas, gens.stream)
    tape = UniformTape(gens.strategy)

    C, _, c_flags = stream.take(config.warm_up)
    whitener = fit_from_calibration(C, center=config.center)
    V = _expand(whiten(whitener, C), config)
    Xt, yt = gen_test_set(config, gens.test, betas)
    Zt = _expand(whiten(whitener, Xt), config)

    for attempt in range(MAX_INIT_ATTEMPTS):
        init_rng = gens.init if attempt == 0 else replica_generators(config.seed, replica, attempt).init
        X0, y0, f0 = gen_initial_design(config, init_rng, betas)
        design = DesignState.from_arrays(_expand(whiten(whitener, X0), config), y0)
        if not design.singular:
            break
    else:
        raise SingularDesignError(f"initial design singular after {MAX_INIT_ATTEMPTS} attempts")

    model = fit(design, loss)
    state = st.init_strategy(strategy.kind, V, design, model, config.alpha, config.cutoff, strategy.weighted)

    curve = [rmse(predict(model, Zt), yt)]
    stab: List[float] = []
    loos: List[float] = []
    history: List[np.ndarray] = []

    def record():
        if diagnostics:
            history.append(predict(model, V))
            s, l = stopping_diagnostics(history, design, loss, window)
            stab.append(s)
            loos.append(l)

    record()
    events: Optional[List[tuple]] = [] if trace else None
    accepted: List[int] = []
    accepted_flags: List[bool] = []
    outliers = 0
    fallbacks = 0
    stopped = False
    labels = 0
    cap = config.stream_cap
    while labels < config.budget and stream.position < cap:
        n = min(CHUNK, cap - stream.position)
        X, y, flags = stream.peek(n)
        Z = _expand(whiten(whitener, X), config)
        stats, fell_back = st.statistic(state, Z, design, model)
        u = tape.get(stream.position, n) if state.kind == st.RANDOM else None
        mask = st.accept_mask(state, stats, u)
        hits = np.flatnonzero(mask)
        seen = n if hits.size == 0 else int(hits[0]) + 1
        if fell_back:
            fallbacks += seen
        if events is not None:
            dec = u if u is not None else stats
            for j in range(seen):
                events.append((labels, stream.position + j, float(dec[j]), state.thresholds, bool(mask[j])))
        if hits.size == 0:
            stream.advance(n)
            continue
        j = int(hits[0])
        accepted.append(stream.position + j)
        outliers += int(flags[j])
        accepted_flags.append(bool(flags[j]))
        design = augment(design, Z[j], y[j])
        labels += 1
        stream.advance(j + 1)
        model = fit(design, loss)
        state = st.refresh_thresholds(state, design, model)
        curve.append(rmse(predict(model, Zt), yt))
        record()
        if stop_tol is not None and diagnostics and stab[-1] < stop_tol:
            stopped = True
            break

    return RunResult(
        rmse_curve=np.asarray(curve),
        labels_spent=labels,
        stream_position=stream.position,
        outliers_sampled=outliers,
        stabilization_curve=np.asarray(stab),
        loocv_curve=np.asarray(loos),
        accept_positions=accepted,
        accepted_outliers=accepted_flags,
        calibration_outliers=int(c_flags.sum()),
        initial_outliers=int(f0.sum()),
        n_fallbacks=fallbacks + state.n_fallbacks,
        stopped_early=stopped,
        trace=events,
    )


@dataclass(eq=False)
class AggregateResult:
    """Per-step mean and std of test RMSE over replicas for one strategy."""

    scenario: str
    strategy: StrategySpec
    mean: np.ndarray
    std: np.ndarray
    n_replicas: int
    n_padded: np.ndarray
    curves: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.mean.shape[0])


def pad_curves(curves: Sequence[np.ndarray], length: int) -> Tuple[np.ndarray, np.ndarray]:
    """Right-pad each curve with its last value; returns (matrix, padded count per step)."""
    out = np.empty((len(curves), length))
    padded = np.zeros(length, dtype=int)
    for i, c in enumerate(curves):
        c = np.asarray(c, dtype=float)
        k = min(c.size, length)
        out[i, :k] = c[:k]
        out[i, k:] = c[k - 1]
        padded[k:] += 1
    return out, padded


def aggregate(scenario: str, spec: StrategySpec, curves: Sequence[np.ndarray], length: int) -> AggregateResult:
    mat, padded = pad_curves(curves, length)
    return AggregateResult(scenario, spec, mat.mean(axis=0), mat.std(axis=0), mat.shape[0], padded, mat)


def _replica_task(args):
    config, specs, replica, kwargs = args
    return [run_single(config, s, replica, **kwargs) for s in specs]


def default_workers() -> int:
    env = os.environ.get("STREAMAL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicas(config: ScenarioConfig, specs: Sequence[StrategySpec], n_replicas: int,
                 workers: Optional[int] = None, **kwargs) -> List[List[RunResult]]:
    """Raw results, indexed ``[replica][strategy]``, in replica order."""
    if n_replicas < 1:
        raise ValueError("n_replicas must be >= 1")
    workers = default_workers() if workers is None else workers
    tasks = [(config, list(specs), r, kwargs) for r in range(n_replicas)]
    if workers <= 1 or n_replicas == 1:
        return [_replica_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replica_task, tasks, chunksize=max(1, n_replicas // (4 * workers))))


def run_replicated(config: ScenarioConfig, specs: Sequence[StrategySpec], n_replicas: int,
                   scenario: str = "custom", workers: Optional[int] = None,
                   **kwargs) -> List[AggregateResult]:
    runs = run_replicas(config, specs, n_replicas, workers, **kwargs)
    return [
        aggregate(scenario, spec, [runs[r][i].rmse_curve for r in range(n_replicas)], config.budget + 1)
        for i, spec in enumerate(specs)
    ]
