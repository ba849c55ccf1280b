"""Numerically stable hazard, survival, and shedding functions.

The log-normal hazard h(tau) = f(tau)/S(tau) is evaluated through the
scaled complementary error function,

    h(tau; mu, sigma) = sqrt(2/pi) / (tau * sigma * erfcx(z)),
    z = (ln tau - mu) / (sigma * sqrt(2)),

which stays well conditioned where the direct f/S ratio suffers
catastrophic cancellation.  ``erfcx_stable`` is a piecewise evaluation:
the identity exp(z^2) * erfc(z) below the branch point |z| = 3.5, a
four-term asymptotic expansion above it, and the reflection
erfcx(z) = 2 exp(z^2) - erfcx(-z) for negative arguments.  All internal
math runs in float64 so the result error stays strictly inside the
single-precision budget the branch layout was designed for; callers that
store rates in float32 downcast at the store.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import InvalidMomentsError

__all__ = [
    "LogNormalParams",
    "Shedding",
    "erfcx_stable",
    "lognormal_hazard",
    "lognormal_pdf",
    "lognormal_survival",
    "lognormal_from_mean_median",
    "shedding",
]

_BRANCH_Z = 3.5
_SQRT_PI = math.sqrt(math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class LogNormalParams:
    """Log-scale location and shape of a log-normal holding time."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma**2)

    @property
    def median(self) -> float:
        return math.exp(self.mu)

    @property
    def mode(self) -> float:
        return math.exp(self.mu - self.sigma**2)


def lognormal_from_mean_median(mean: float, median: float) -> LogNormalParams:
    """Invert (mean, median) moments into (mu, sigma).

    mean = exp(mu + sigma^2/2) and median = exp(mu), so
    mu = ln(median), sigma = sqrt(2 ln(mean/median)).
    """
    if not (mean > median > 0.0):
        raise InvalidMomentsError(
            f"need mean > median > 0, got mean={mean}, median={median}"
        )
    mu = math.log(median)
    sigma = math.sqrt(2.0 * math.log(mean / median))
    return LogNormalParams(mu=mu, sigma=sigma)


def _erfcx_positive(z: np.ndarray) -> np.ndarray:
    """erfcx on z >= 0: identity branch below 3.5, asymptotic above."""
    out = np.empty_like(z)
    lo = z <= _BRANCH_Z
    zl = z[lo]
    out[lo] = np.exp(zl * zl) * erfc(zl)
    hi = ~lo
    zh = z[hi]
    inv2 = 1.0 / (zh * zh)
    out[hi] = (1.0 + inv2 * (-0.5 + inv2 * (0.75 + inv2 * (-1.875)))) / (zh * _SQRT_PI)
    return out


def _erfcx_f64(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    neg = z < 0.0
    out[~neg] = _erfcx_positive(z[~neg])
    zn = z[neg]
    if zn.size:
        with np.errstate(over="ignore"):
            out[neg] = 2.0 * np.exp(zn * zn) - _erfcx_positive(-zn)
    return out


def erfcx_stable(z):
    """Scaled complementary error function exp(z^2) * erfc(z).

    Piecewise: identity for |z| <= 3.5, four-term asymptotic series for
    |z| > 3.5, reflection 2 exp(z^2) - erfcx(-z) for z < 0.  Total on
    finite inputs; overflows to +inf for very negative z, which is the
    correct limit for the hazard (h -> 0).
    """
    z_arr = np.asarray(z, dtype=np.float64)
    scalar = z_arr.ndim == 0
    out = _erfcx_f64(np.atleast_1d(z_arr))
    return float(out[0]) if scalar else out


def _hazard_f64(tau: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    """Hazard on a float64 age array with no input validation."""
    out = np.zeros_like(tau)
    pos = tau > 0.0
    tp = tau[pos]
    if tp.size:
        z = (np.log(tp) - mu) / (sigma * math.sqrt(2.0))
        with np.errstate(over="ignore", divide="ignore"):
            denom = tp * sigma * _erfcx_f64(z)
            out[pos] = np.where(np.isinf(denom), 0.0, _SQRT_2_OVER_PI / denom)
    return out


def lognormal_hazard(tau, p: LogNormalParams):
    """Instantaneous log-normal hazard rate at age tau (tau >= 0).

    Exactly 0 at tau = 0 (the renewal-reset limit).
    """
    tau_arr = np.asarray(tau, dtype=np.float64)
    scalar = tau_arr.ndim == 0
    tau_arr = np.atleast_1d(tau_arr)
    if np.any(tau_arr < 0.0):
        raise ValueError("tau must be >= 0")
    out = _hazard_f64(tau_arr, p.mu, p.sigma)
    return float(out[0]) if scalar else out


def lognormal_pdf(tau, p: LogNormalParams):
    """Log-normal density; 0 at tau = 0."""
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    out = np.zeros_like(tau_arr)
    pos = tau_arr > 0.0
    if np.any(pos):
        tp = tau_arr[pos]
        zs = (np.log(tp) - p.mu) / p.sigma
        out[pos] = np.exp(-0.5 * zs * zs) / (tp * p.sigma * math.sqrt(2.0 * math.pi))
    return float(out[0]) if np.asarray(tau).ndim == 0 else out


def lognormal_survival(tau, p: LogNormalParams):
    """Log-normal survival S(tau) = P(T > tau); 1 at tau = 0."""
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    out = np.ones_like(tau_arr)
    pos = tau_arr > 0.0
    if np.any(pos):
        tp = tau_arr[pos]
        z = (np.log(tp) - p.mu) / (p.sigma * math.sqrt(2.0))
        out[pos] = 0.5 * erfc(z)
    return float(out[0]) if np.asarray(tau).ndim == 0 else out


@dataclass(frozen=True)
class Shedding:
    """Viral shedding profile s(tau) weighting per-edge transmission.

    kind is one of:
      - "constant": s(tau) = 1 (recovers standard edge semantics)
      - "lognormal_hazard": s(tau) = h_LN(tau; params)
      - "density_peak": s(tau) = f(tau; params) / f(mode; params),
        the log-normal density normalized to peak at 1
    """

    kind: str
    params: LogNormalParams | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "lognormal_hazard", "density_peak"):
            raise ValueError(f"unknown shedding kind {self.kind!r}")
        if self.kind != "constant" and self.params is None:
            raise ValueError(f"shedding kind {self.kind!r} requires params")

    @classmethod
    def constant(cls) -> "Shedding":
        return cls(kind="constant")

    @classmethod
    def lognormal_hazard(cls, params: LogNormalParams) -> "Shedding":
        return cls(kind="lognormal_hazard", params=params)

    @classmethod
    def density_peak(cls, params: LogNormalParams) -> "Shedding":
        return cls(kind="density_peak", params=params)


def shedding(s: Shedding, tau):
    """Evaluate a shedding profile at age tau (tau >= 0)."""
    tau_arr = np.asarray(tau, dtype=np.float64)
    if np.any(np.atleast_1d(tau_arr) < 0.0):
        raise ValueError("tau must be >= 0")
    if s.kind == "constant":
        ones = np.ones_like(tau_arr)
        return float(ones) if tau_arr.ndim == 0 else ones
    if s.kind == "lognormal_hazard":
        return lognormal_hazard(tau, s.params)
    peak = lognormal_pdf(s.params.mode, s.params)
    val = lognormal_pdf(tau, s.params)
    return val / peak
