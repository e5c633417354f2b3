"""Seeded synthetic data streams with isolated covariate/concept outliers.

Normal points: ``x ~ N(0, sx^2 I)``, ``y = x beta + eps``, ``eps ~ N(0, se^2)``.
Outliers use their own input/noise scales and an outlying coefficient vector.
Each point is an outlier independently with probability ``contamination``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional, Tuple

import numpy as np

BLOCK = 1024


@dataclass(frozen=True)
class ScenarioConfig:
    p: int = 20
    sigma_x_normal: float = 1.0
    sigma_x_outlier: float = 3.0
    sigma_eps_normal: float = 1.0
    sigma_eps_outlier: float = 3.0
    beta_normal_low: float = -5.0
    beta_normal_high: float = 5.0
    beta_outlier_low: float = 10.0
    beta_outlier_high: float = 15.0
    contamination: float = 0.0
    budget: int = 50
    warm_up: int = 500
    alpha: float = 0.05
    cutoff: float = 0.05
    initial_design_size: Optional[int] = None
    contaminated_init: bool = False
    test_size: int = 1000
    stream_cap: int = 1_000_000
    seed: int = 0
    fresh_outlier_beta: bool = False
    center: bool = False
    intercept: bool = False
    huber_k: float = 1.345
    tukey_k: float = 4.685

    def __post_init__(self):
        if self.initial_design_size is None:
            object.__setattr__(self, "initial_design_size", self.p + 2)
        errs = []
        if self.p < 1:
            errs.append("p must be >= 1")
        for name in ("sigma_x_normal", "sigma_x_outlier", "sigma_eps_normal", "sigma_eps_outlier",
                     "huber_k", "tukey_k"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be > 0")
        if self.beta_normal_low > self.beta_normal_high:
            errs.append("beta_normal_low exceeds beta_normal_high")
        if self.beta_outlier_low > self.beta_outlier_high:
            errs.append("beta_outlier_low exceeds beta_outlier_high")
        if not 0.0 <= self.contamination <= 1.0:
            errs.append("contamination must lie in [0, 1]")
        if self.budget < 0:
            errs.append("budget must be >= 0")
        if self.warm_up < self.p + 1:
            errs.append(f"warm_up must be >= p + 1 = {self.p + 1}")
        if not 0.0 < self.alpha < 1.0:
            errs.append("alpha must lie in (0, 1)")
        if not 0.0 <= self.cutoff < 1.0:
            errs.append("cutoff must lie in [0, 1)")
        if self.cutoff + self.alpha >= 1.0:
            errs.append("cutoff + alpha must be < 1")
        if self.initial_design_size < self.n_features:
            errs.append("initial_design_size must be >= the number of model features")
        if self.test_size < 1:
            errs.append("test_size must be >= 1")
        if self.stream_cap <= self.warm_up:
            errs.append("stream_cap must exceed warm_up")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def n_features(self) -> int:
        return self.p + int(self.intercept)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


class Observation(NamedTuple):
    x: np.ndarray
    y: float
    is_outlier: bool


class Betas(NamedTuple):
    normal: np.ndarray
    outlier: np.ndarray


def draw_betas(rng: np.random.Generator, config: ScenarioConfig) -> Betas:
    normal = rng.uniform(config.beta_normal_low, config.beta_normal_high, size=config.p)
    outlier = rng.uniform(config.beta_outlier_low, config.beta_outlier_high, size=config.p)
    return Betas(normal, outlier)


def _draw_block(rng, config: ScenarioConfig, betas: Betas, n: int, contamination: float):
    """Draw ``n`` observations; returns (X, y, is_outlier)."""
    p = config.p
    flags = rng.random(n) < contamination
    X = rng.standard_normal((n, p))
    eps = rng.standard_normal(n)
    sx = np.where(flags, config.sigma_x_outlier, config.sigma_x_normal)
    se = np.where(flags, config.sigma_eps_outlier, config.sigma_eps_normal)
    X *= sx[:, None]
    eps *= se
    y = X @ betas.normal
    if flags.any():
        if config.fresh_outlier_beta:
            B = rng.uniform(config.beta_outlier_low, config.beta_outlier_high, size=(int(flags.sum()), p))
            y[flags] = np.einsum("ij,ij->i", X[flags], B)
        else:
            y[flags] = X[flags] @ betas.outlier
    return X, y + eps, flags


class ObservationStream:
    """Endless, reproducible stream of observations.

    Points are generated in fixed-size blocks, so the ``i``-th observation
    depends only on the seed, never on how the stream was consumed.
    """

    def __init__(self, config: ScenarioConfig, betas: Betas, rng: np.random.Generator):
        self.config = config
        self.betas = betas
        self._rng = rng
        self._X = np.empty((0, config.p))
        self._y = np.empty(0)
        self._flags = np.empty(0, dtype=bool)
        self._offset = 0  # stream index of self._X[0]
        self.position = 0

    def _ensure(self, upto: int):
        while self._offset + self._X.shape[0] < upto:
            X, y, f = _draw_block(self._rng, self.config, self.betas, BLOCK, self.config.contamination)
            # drop consumed rows to keep memory flat
            keep = self.position - self._offset
            self._X = np.vstack([self._X[keep:], X])
            self._y = np.concatenate([self._y[keep:], y])
            self._flags = np.concatenate([self._flags[keep:], f])
            self._offset += keep

    def peek(self, n: int):
        """The next ``n`` observations as arrays, without consuming them."""
        self._ensure(self.position + n)
        a = self.position - self._offset
        return self._X[a:a + n], self._y[a:a + n], self._flags[a:a + n]

    def take(self, n: int):
        out = tuple(arr.copy() for arr in self.peek(n))
        self.position += n
        return out

    def advance(self, n: int):
        self.position += n

    def next_observation(self) -> Observation:
        X, y, f = self.take(1)
        return Observation(X[0], float(y[0]), bool(f[0]))

    def __iter__(self):
        return self

    def __next__(self) -> Observation:
        return self.next_observation()


def next_observation(stream: ObservationStream) -> Observation:
    return stream.next_observation()


def gen_initial_design(config: ScenarioConfig, rng: np.random.Generator,
                       betas: Betas) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Initial labeled design of ``initial_design_size`` rows.

    Unless ``contaminated_init`` is set, outlier draws are rejected and
    redrawn, so the design is clean.
    """
    n = config.initial_design_size
    Xs, ys, fs = [], [], []
    got = 0
    while got < n:
        X, y, f = _draw_block(rng, config, betas, n, config.contamination)
        if not config.contaminated_init:
            X, y, f = X[~f], y[~f], f[~f]
        Xs.append(X)
        ys.append(y)
        fs.append(f)
        got += X.shape[0]
    return np.vstack(Xs)[:n], np.concatenate(ys)[:n], np.concatenate(fs)[:n]


def gen_test_set(config: ScenarioConfig, rng: np.random.Generator, betas: Betas):
    """Clean test set from the normal regime."""
    X, y, _ = _draw_block(rng, config, betas, config.test_size, 0.0)
    return X, y


def dump_stream(path, X, y, flags, delimiter: str = ",") -> None:
    """Write one observation per line: features, response, outlier flag."""
    X = np.atleast_2d(X)
    with open(path, "w") as fh:
        for row, yi, fi in zip(X, y, flags):
            fh.write(delimiter.join(repr(float(v)) for v in row))
            fh.write(f"{delimiter}{float(yi)!r}{delimiter}{int(bool(fi))}\n")


def load_stream(path, delimiter: str = ","):
    data = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    return data[:, :-2], data[:, -2], data[:, -1].astype(bool)


class ReplicaSeeds(NamedTuple):
    betas: np.random.Generator
    init: np.random.Generator
    test: np.random.Generator
    stream: np.random.Generator
    strategy: np.random.Generator


def replica_seed_sequence(seed: int, replica: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replica),))


def replica_generators(seed: int, replica: int, attempt: int = 0) -> ReplicaSeeds:
    """Independent PCG64 generators for each random component of one replica.

    ``attempt`` perturbs only the initial-design generator (used when an
    initial design is singular and must be redrawn).
    """
    children = replica_seed_sequence(seed, replica).spawn(5)
    gens = [np.random.Generator(np.random.PCG64(s)) for s in children]
    if attempt:
        init_ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replica), 1, int(attempt)))
        gens[1] = np.random.Generator(np.random.PCG64(init_ss))
    return ReplicaSeeds(*gens)
