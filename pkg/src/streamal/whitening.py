"""Covariance estimation and eigendecomposition-based whitening."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

EIGEN_FLOOR_RATIO = 1e-10


class RankDeficiencyError(ValueError):
    pass


def estimate_covariance(calibration, strict: bool = True) -> np.ndarray:
    """Unbiased sample covariance of the rows of ``calibration``.

    With ``strict`` (the default) at least ``p + 1`` rows are required, so
    that the estimate can be full rank. ``strict=False`` only needs 2 rows.
    """
    C = np.atleast_2d(np.asarray(calibration, dtype=float))
    m, p = C.shape
    if strict and m <= p:
        raise RankDeficiencyError(f"need more than p={p} calibration rows, got {m}")
    if m < 2:
        raise RankDeficiencyError("need at least 2 calibration rows")
    D = C - C.mean(axis=0)
    S = D.T @ D / (m - 1)
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class Whitener:
    """Linear map ``x -> Lambda^{-1/2} U^T x``.

    Attributes
    ----------
    eigenvectors : ndarray, shape (p, p)
        Columns are unit eigenvectors, first nonzero entry positive.
    eigenvalues : ndarray, shape (p,)
        Descending, clamped at ``1e-10 * max eigenvalue``.
    source_size : int
        Number of calibration rows behind the covariance (0 if unknown).
    n_clamped : int
        How many eigenvalues were raised to the floor. Nonzero means the
        covariance was (numerically) singular.
    mean : ndarray or None
        Subtracted before rotating when set; ``None`` means no centering.
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    source_size: int = 0
    n_clamped: int = 0
    mean: Optional[np.ndarray] = None

    @property
    def degenerate(self) -> bool:
        return self.n_clamped > 0

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """``U Lambda^{-1/2}``, so that ``z = x @ matrix`` for row vectors."""
        return self.eigenvectors / np.sqrt(self.eigenvalues)


def _fix_signs(U: np.ndarray) -> np.ndarray:
    U = U.copy()
    for j in range(U.shape[1]):
        nz = np.flatnonzero(U[:, j])
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
    return U


def fit_whitener(cov, source_size: int = 0, mean=None) -> Whitener:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    lam, U = np.linalg.eigh(0.5 * (cov + cov.T))
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    U = _fix_signs(U[:, order])
    top = lam[0]
    if not top > 0:
        raise RankDeficiencyError("covariance has no positive eigenvalue")
    floor = EIGEN_FLOOR_RATIO * top
    n_clamped = int(np.sum(lam < floor))
    lam = np.maximum(lam, floor)
    if mean is not None:
        mean = np.asarray(mean, dtype=float)
    return Whitener(U, lam, int(source_size), n_clamped, mean)


def fit_from_calibration(calibration, center: bool = False) -> Whitener:
    C = np.atleast_2d(np.asarray(calibration, dtype=float))
    cov = estimate_covariance(C)
    return fit_whitener(cov, source_size=C.shape[0], mean=C.mean(axis=0) if center else None)


def whiten(w: Whitener, x) -> np.ndarray:
    """Whiten a vector or the rows of a matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != w.dim:
        raise ValueError(f"expected last dimension {w.dim}, got {x.shape[-1]}")
    if w.mean is not None:
        x = x - w.mean
    return x @ w.matrix
