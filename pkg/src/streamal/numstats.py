"""Gaussian kernel density estimation and robust scale helpers.

Thresholds for every query strategy are quantiles of a Gaussian KDE fitted
to a one-dimensional statistic (norms or prediction variances) evaluated on
the calibration set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
MAD_CONSISTENCY = 0.6745


class DegenerateDistributionError(ValueError):
    """Raised when a sample has no spread."""


@dataclass(frozen=True)
class KernelDensity:
    """Gaussian-kernel density estimate over a 1-D sample.

    Parameters
    ----------
    samples : ndarray
        The statistics ``s_1..s_n``.
    bandwidth : float
        Kernel standard deviation ``h``.
    """

    samples: np.ndarray
    bandwidth: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if s.size < 2:
            raise ValueError("KernelDensity needs at least 2 samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("KernelDensity samples must be finite")
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @classmethod
    def fit(cls, samples) -> "KernelDensity":
        """Build a KDE with Silverman's bandwidth."""
        s = np.asarray(samples, dtype=float).ravel()
        return cls(s, silverman_bandwidth(s))

    def pdf(self, s):
        return kde_density(self, s)

    def cdf(self, s):
        return kde_cdf(self, s)

    def quantile(self, q: float) -> float:
        return kde_quantile(self, q)


def silverman_bandwidth(samples) -> float:
    """Silverman's rule of thumb, ``0.9 * min(sd, IQR/1.34) * n**(-1/5)``.

    Falls back to the standard deviation alone when the IQR is zero.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 2:
        raise ValueError("need at least 2 samples for a bandwidth")
    sd = float(np.std(s, ddof=1))
    if sd == 0.0:
        raise DegenerateDistributionError("all samples are identical")
    q75, q25 = np.percentile(s, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * s.size ** (-0.2)


def kde_density(kd: KernelDensity, s):
    s_arr = np.asarray(s, dtype=float)
    u = (s_arr[..., None] - kd.samples) / kd.bandwidth
    dens = np.mean(np.exp(-0.5 * u * u), axis=-1) * (_INV_SQRT_2PI / kd.bandwidth)
    return dens if dens.ndim else float(dens)


def kde_cdf(kd: KernelDensity, s):
    """Closed-form CDF of the Gaussian mixture, ``mean(Phi((s - s_i) / h))``."""
    s_arr = np.asarray(s, dtype=float)
    vals = np.mean(ndtr((s_arr[..., None] - kd.samples) / kd.bandwidth), axis=-1)
    return vals if vals.ndim else float(vals)


def kde_quantile(kd: KernelDensity, q: float) -> float:
    """Invert the KDE CDF at probability ``q`` in (0, 1).

    The root is bracketed by ``[min - 5h, max + 5h]`` and widened further if
    ``q`` lies in the extreme tails of the mixture.
    """
    if not (0.0 < q < 1.0):
        raise ValueError(f"quantile probability must lie in (0, 1), got {q}")
    h = kd.bandwidth
    lo = float(kd.samples.min()) - 5.0 * h
    hi = float(kd.samples.max()) + 5.0 * h

    def f(x):
        return float(np.mean(ndtr((x - kd.samples) / h))) - q

    while f(lo) > 0:
        lo -= 5.0 * h
    while f(hi) < 0:
        hi += 5.0 * h
    # xtol far below the CDF tolerance: density is bounded by 1/(h*sqrt(2pi))
    xtol = max(1e-14, 1e-12 * h)
    return float(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def _median(a: np.ndarray) -> float:
    # np.median carries ~20us of overhead; IRLS calls this thousands of times
    s = np.sort(a)
    n = s.size
    h = n // 2
    return float(s[h]) if n % 2 else 0.5 * float(s[h - 1] + s[h])


def mad_scale(residuals) -> float:
    """Normal-consistent MAD scale, ``median(|e - median(e)|) / 0.6745``."""
    e = np.asarray(residuals, dtype=float).ravel()
    if e.size < 2:
        raise ValueError("need at least 2 residuals for a scale estimate")
    if not np.all(np.isfinite(e)):
        raise ValueError("residuals must be finite")
    mad = _median(np.abs(e - _median(e)))
    if mad == 0.0:
        raise DegenerateDistributionError("median absolute deviation is zero")
    return mad / MAD_CONSISTENCY


def robust_scale(residuals) -> float:
    """MAD scale with a fallback to the sample sd (0.0 if that vanishes too)."""
    try:
        return mad_scale(residuals)
    except DegenerateDistributionError:
        e = np.asarray(residuals, dtype=float).ravel()
        return float(np.std(e, ddof=1)) if e.size > 1 else 0.0
