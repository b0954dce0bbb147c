"""Empirical exceedance probabilities and exponent fits.

Models (``y`` regressed on ``x`` as ``y = b - a x``):

* ``exponential``: ``y = log p``, ``x = lambda``
* ``polyexp``:     ``y = log p - log lambda``, ``x = lambda``
* ``gaussian``:    ``y = log p``, ``x = lambda**2``

Points are weighted by the delta-method inverse variance of ``log p``.
Survival estimates on a common sample are correlated, so the reported
standard error is a sandwich estimate using the full delta-method
covariance ``Cov(log p_i, log p_j) = (p_max(i,j) - p_i p_j) / (R p_i p_j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MODELS = ("exponential", "polyexp", "gaussian")


@dataclass
class TailEstimate:
    lambdas: np.ndarray
    counts: np.ndarray
    p: np.ndarray
    se: np.ndarray
    model: str
    reps: int
    exponent: float = math.nan
    exponent_se: float = math.nan
    intercept: float = math.nan
    ci: tuple[float, float] = (math.nan, math.nan)
    r2: float = math.nan
    used: np.ndarray = field(default=None, repr=False)
    degenerate: bool = False
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        f = lambda t: None if t is None or (isinstance(t, float) and math.isnan(t)) else float(t)
        return {
            "model": self.model,
            "reps": self.reps,
            "lambdas": [float(t) for t in self.lambdas],
            "counts": [int(t) for t in self.counts],
            "p": [float(t) for t in self.p],
            "se": [float(t) for t in self.se],
            "exponent": f(self.exponent),
            "exponent_se": f(self.exponent_se),
            "ci": [f(self.ci[0]), f(self.ci[1])],
            "intercept": f(self.intercept),
            "weighted_r2": f(self.r2),
            "degenerate": self.degenerate,
            "flags": list(self.flags),
        }


def exceedance(samples, center: float, lambdas) -> tuple[np.ndarray, np.ndarray]:
    """Counts and fractions of ``samples >= center + lambda``."""
    s = np.sort(np.asarray(samples, dtype=np.float64))
    lam = np.asarray(lambdas, dtype=np.float64)
    counts = s.size - np.searchsorted(s, center + lam, side="left")
    return counts, counts / s.size


def _design(model: str, lam: np.ndarray, p: np.ndarray):
    if model == "exponential":
        return lam, np.log(p)
    if model == "polyexp":
        return lam, np.log(p) - np.log(lam)
    if model == "gaussian":
        return lam**2, np.log(p)
    raise ValueError(f"unknown tail model {model!r}; choose from {MODELS}")


def estimate_tail(samples, center: float, lambda_grid, model: str = "polyexp", min_samples: int = 1000) -> TailEstimate:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {samples.size}")
    if model not in MODELS:
        raise ValueError(f"unknown tail model {model!r}; choose from {MODELS}")
    lam = np.sort(np.asarray(lambda_grid, dtype=np.float64))
    if model == "polyexp" and np.any(lam <= 0):
        raise ValueError("polyexp model needs lambda > 0")
    R = samples.size
    counts, p = exceedance(samples, center, lam)
    se = np.sqrt(p * (1 - p) / R)
    est = TailEstimate(lam, counts, p, se, model, R)
    usable = (counts > 0) & (counts < R)
    for t, c in zip(lam[~usable], counts[~usable]):
        est.flags.append(f"lambda={t:g} excluded ({'zero' if c == 0 else 'all'} exceedances)")
    est.used = usable
    if usable.sum() < 2:
        est.degenerate = True
        est.flags.append("fewer than two usable grid points")
        return est
    lu, pu = lam[usable], p[usable]
    x, y = _design(model, lu, pu)
    w = pu * R / (1 - pu)
    X = np.column_stack([np.ones_like(x), -x])
    XtW = X.T * w
    A = XtW @ X
    beta = np.linalg.solve(A, XtW @ y)
    # delta-method covariance of log p-hat; lam sorted so p_max(i,j) = p[max(i,j)]
    P = pu[np.maximum.outer(np.arange(pu.size), np.arange(pu.size))]
    S = (P - np.outer(pu, pu)) / (R * np.outer(pu, pu))
    Ainv = np.linalg.inv(A)
    V = Ainv @ XtW @ S @ XtW.T @ Ainv
    b, a = beta
    resid = y - X @ beta
    ybar = np.sum(w * y) / w.sum()
    ss_tot = np.sum(w * (y - ybar) ** 2)
    est.exponent = float(a)
    est.intercept = float(b)
    est.exponent_se = float(math.sqrt(max(V[1, 1], 0.0)))
    est.ci = (est.exponent - 1.96 * est.exponent_se, est.exponent + 1.96 * est.exponent_se)
    est.r2 = float(1 - np.sum(w * resid**2) / ss_tot) if ss_tot > 0 else math.nan
    return est


def polyexp_tail_samples(rng: np.random.Generator, size: int, a: float, shift: float = 0.0) -> np.ndarray:
    """Samples with survival ``P(X - shift > t) = t * exp(-a (t - 1))`` for ``t >= 1``.

    Inverse CDF through the lower Lambert-W branch; needs ``a > 1`` so the
    survival function is decreasing on ``[1, inf)``.
    """
    from scipy.special import lambertw

    if a <= 1:
        raise ValueError("need a > 1")
    u = rng.random(size)
    t = -np.real(lambertw(-a * u * math.exp(-a), k=-1)) / a
    return shift + t
