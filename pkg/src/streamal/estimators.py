"""OLS and IRLS M-estimation (Huber, Tukey bisquare) on a growing design."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numstats import robust_scale

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50


class SingularDesignError(np.linalg.LinAlgError):
    pass


class DegenerateLeverageError(ValueError):
    pass


@dataclass(frozen=True)
class LossKind:
    """Regression loss. ``k_factor`` multiplies the scale estimate to give ``k``."""

    name: str
    k_factor: float = float("inf")

    def __post_init__(self):
        if self.name not in ("ols", "huber", "tukey"):
            raise ValueError(f"unknown loss {self.name!r}")
        if not self.k_factor > 0:
            raise ValueError("k_factor must be positive")

    @property
    def robust(self) -> bool:
        return self.name != "ols"

    def weight(self, e, k):
        if self.name == "huber":
            return huber_weight(e, k)
        if self.name == "tukey":
            return tukey_weight(e, k)
        return np.ones_like(np.asarray(e, dtype=float))

    def rho(self, e, k):
        """Per-residual loss contribution."""
        e = np.asarray(e, dtype=float)
        a = np.abs(e)
        if self.name == "huber":
            return np.where(a <= k, e * e, 2 * k * a - k * k)
        if self.name == "tukey":
            inside = (k * k / 6) * (1 - (1 - (e / k) ** 2) ** 3)
            return np.where(a <= k, inside, k * k / 6)
        return e * e

    def __str__(self):
        return self.name


OLS = LossKind("ols")
HUBER = LossKind("huber", 1.345)
TUKEY = LossKind("tukey", 4.685)


def loss_from_name(name: str, k_factor: Optional[float] = None) -> LossKind:
    base = {"ols": OLS, "huber": HUBER, "tukey": TUKEY}[name.lower()]
    if k_factor is None or base is OLS:
        return base
    return LossKind(base.name, k_factor)


def huber_weight(e, k):
    a = np.abs(np.asarray(e, dtype=float))
    with np.errstate(divide="ignore", over="ignore"):
        w = np.where(a <= k, 1.0, k / np.where(a == 0, 1.0, a))
    return w if w.ndim else float(w)


def tukey_weight(e, k):
    e = np.asarray(e, dtype=float)
    w = np.where(np.abs(e) <= k, (1.0 - (e / k) ** 2) ** 2, 0.0)
    return w if w.ndim else float(w)


def _inverse(gram):
    try:
        inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(inv)):
        return None
    return inv


@dataclass(frozen=True)
class DesignState:
    """Labeled design: model matrix ``Z`` (rows), responses ``y``, cached Gram."""

    Z: np.ndarray
    y: np.ndarray
    gram: np.ndarray = field(repr=False)
    gram_inverse: Optional[np.ndarray] = field(repr=False)

    @classmethod
    def from_arrays(cls, Z, y) -> "DesignState":
        Z = np.atleast_2d(np.array(Z, dtype=float))
        y = np.array(y, dtype=float).ravel()
        if Z.shape[0] != y.shape[0]:
            raise ValueError("Z and y have different row counts")
        gram = Z.T @ Z
        return cls(Z, y, gram, _inverse(gram))

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def singular(self) -> bool:
        return self.gram_inverse is None


def augment(design: DesignState, z, y) -> DesignState:
    """Append one labeled row; the Gram inverse is recomputed from scratch."""
    z = np.asarray(z, dtype=float).ravel()
    if z.shape[0] != design.p:
        raise ValueError(f"expected {design.p} features, got {z.shape[0]}")
    Z = np.vstack([design.Z, z])
    yy = np.append(design.y, float(y))
    # gram_old + z z^T, formed directly so it matches Z^T Z exactly
    gram = Z.T @ Z
    return DesignState(Z, yy, gram, _inverse(gram))


@dataclass(frozen=True)
class FittedModel:
    coefficients: np.ndarray
    weights: np.ndarray
    scale: float
    loss: LossKind
    converged: bool = True
    iterations: int = 0

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]


def fit_ols(design: DesignState) -> FittedModel:
    if design.n < design.p or design.singular:
        raise SingularDesignError(f"design with {design.n} rows and p={design.p} is singular")
    beta = np.linalg.solve(design.gram, design.Z.T @ design.y)
    resid = design.y - design.Z @ beta
    return FittedModel(beta, np.ones(design.n), robust_scale(resid), OLS, True, 0)


def _weighted_solve(Z, y, w):
    if np.count_nonzero(w) < Z.shape[1]:
        raise np.linalg.LinAlgError("fewer positive weights than coefficients")
    Zw = Z * w[:, None]
    beta = np.linalg.solve(Zw.T @ Z, Zw.T @ y)
    if not np.all(np.isfinite(beta)):
        raise np.linalg.LinAlgError("non-finite weighted solution")
    return beta


def robust_objective(design: DesignState, beta, loss: LossKind, k: float) -> float:
    """Sum of ``rho(e_i)`` at coefficients ``beta`` for a fixed tuning constant."""
    e = design.y - design.Z @ np.asarray(beta, dtype=float)
    return float(np.sum(loss.rho(e, k)))


def fit_robust(design: DesignState, loss: LossKind, debug: bool = False) -> FittedModel:
    """M-estimate by IRLS, started at OLS, MAD scale re-estimated every pass.

    Stops when the largest coefficient change drops below 1e-8 or after 50
    passes. If a weighted Gram turns singular (Tukey can zero out rows), the
    last good iterate is returned with ``converged=False``.
    """
    if not loss.robust:
        return fit_ols(design)
    start = fit_ols(design)
    beta = start.coefficients
    Z, y = design.Z, design.y
    weights = np.ones(design.n)
    scale = start.scale
    converged = False
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        e = y - Z @ beta
        scale = robust_scale(e)
        if scale == 0.0:
            # exact fit: every weight is 1 and beta is already optimal
            weights = np.ones(design.n)
            converged = True
            break
        k = loss.k_factor * scale
        w = loss.weight(e, k)
        try:
            new_beta = _weighted_solve(Z, y, w)
        except np.linalg.LinAlgError:
            break
        weights = w
        delta = float(np.max(np.abs(new_beta - beta)))
        beta = new_beta
        if delta < IRLS_TOL:
            converged = True
            break
    if debug and scale > 0:
        k = loss.k_factor * scale
        if robust_objective(design, beta, loss, k) > robust_objective(design, start.coefficients, loss, k) * (1 + 1e-9):
            warnings.warn("IRLS ended above the OLS objective", RuntimeWarning, stacklevel=2)
    return FittedModel(beta, weights, scale, loss, converged, it)


def fit(design: DesignState, loss: LossKind) -> FittedModel:
    return fit_robust(design, loss) if loss.robust else fit_ols(design)


def predict(model: FittedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.p:
        raise ValueError(f"expected {model.p} columns, got {X.shape[-1]}")
    return X @ model.coefficients


def rmse(predictions, truth) -> float:
    a = np.asarray(predictions, dtype=float).ravel()
    b = np.asarray(truth, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    if a.size == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def loo_cv(design: DesignState, loss: LossKind) -> float:
    """Leave-one-out RMSE on the labeled design.

    OLS uses the hat-matrix shortcut ``e_i / (1 - h_ii)``; robust losses are
    refitted on each of the ``n`` reduced designs.
    """
    n, p = design.n, design.p
    if n < p + 1:
        raise ValueError(f"LOO needs at least p+1={p + 1} rows, got {n}")
    if design.singular:
        raise SingularDesignError("singular design")
    Z, y = design.Z, design.y
    lev = np.sum((Z @ design.gram_inverse) * Z, axis=1)
    if np.any(lev >= 1 - 1e-10):
        raise DegenerateLeverageError("an observation has leverage 1")
    if not loss.robust:
        beta = design.gram_inverse @ (Z.T @ y)
        loo = (y - Z @ beta) / (1 - lev)
        return float(np.sqrt(np.mean(loo**2)))
    loo = np.empty(n)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        sub = DesignState.from_arrays(Z[mask], y[mask])
        loo[i] = y[i] - Z[i] @ fit_robust(sub, loss).coefficients
        mask[i] = True
    return float(np.sqrt(np.mean(loo**2)))
