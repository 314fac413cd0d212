"""Multivariate Gaussian marginals: log-density and weighted moment updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

RIDGE_START = 1e-6
RIDGE_MAX = 1e-2
# pivots below this fraction of the largest variance count as singular
PIVOT_RTOL = 1e-12
ROUNDING_VAR = 1e-24


class DegenerateComponent(RuntimeError):
    """A mixture component has collapsed (too little weight or singular covariance)."""


@dataclass(frozen=True)
class GaussianComponent:
    """Mean, covariance and the cached lower Cholesky factor of the covariance."""

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray
    logdet: float

    @classmethod
    def from_moments(cls, mean, covariance, ridge_scale: float | None = None) -> GaussianComponent:
        """Build a component, adding a ridge to the covariance if it is not PD.

        The ridge is ``eps * scale * I`` with ``eps`` doubling from 1e-6 up to
        1e-2; ``scale`` defaults to ``trace(cov) / d`` (1 when that is zero).
        """
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DegenerateComponent("non-finite mean or covariance")
        cov = 0.5 * (cov + cov.T)
        chol = _cholesky_or_none(cov)
        if chol is None:
            scale = ridge_scale if ridge_scale is not None else np.trace(cov) / d
            if not scale > 0:
                scale = 1.0
            eps = RIDGE_START
            while chol is None and eps <= RIDGE_MAX:
                ridged = cov + eps * scale * np.eye(d)
                chol = _cholesky_or_none(ridged)
                eps *= 2
            if chol is None:
                raise DegenerateComponent("covariance is not positive definite after ridge")
            cov = ridged
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        return cls(mean, cov, chol, logdet)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def precision(self) -> np.ndarray:
        inv_l = solve_triangular(self.chol, np.eye(self.d), lower=True)
        return inv_l.T @ inv_l


def _cholesky_or_none(cov):
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(chol)):
        return None
    if np.min(np.diag(chol)) ** 2 <= PIVOT_RTOL * np.max(np.diag(cov)):
        return None
    return chol


def mvn_logpdf(x, comp: GaussianComponent):
    """Log-density of N(mean, cov) at a point or at each row of an (N, d) array."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != comp.d:
        raise ValueError(f"covariate dimension {x.shape[-1]} != {comp.d}")
    single = x.ndim == 1
    diff = np.atleast_2d(x) - comp.mean
    z = solve_triangular(comp.chol, diff.T, lower=True)
    maha = np.sum(z * z, axis=0)
    out = -0.5 * (comp.d * np.log(2 * np.pi) + comp.logdet + maha)
    return float(out[0]) if single else out


def weighted_mean_cov(X, tau, min_effective_weight: float = 0.0) -> GaussianComponent:
    """Weighted maximum-likelihood mean and covariance (divisor ``sum(tau)``).

    Raises ``DegenerateComponent`` when ``sum(tau) < min_effective_weight``;
    the EM driver passes ``d + 1``.  A covariance that is not positive
    definite is ridge-regularized; a zero-spread covariance falls back to
    the unweighted spread of ``X`` (or 1) for the ridge scale.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    tau = np.asarray(tau, dtype=float)
    total = float(np.sum(tau))
    if not total > 0 or total < min_effective_weight:
        raise DegenerateComponent(f"effective component weight {total:.3g} is too small")
    mean = tau @ X / total
    diff = X - mean
    cov = (diff * tau[:, None]).T @ diff / total
    scale = None
    # variance at the rounding level of the data is treated as zero spread
    magnitude = float(np.mean(X * X))
    if not np.trace(cov) / X.shape[1] > ROUNDING_VAR * magnitude:
        spread = np.trace(np.atleast_2d(np.cov(X.T, bias=True))) / X.shape[1] if X.shape[0] > 1 else 0.0
        scale = spread if spread > ROUNDING_VAR * magnitude else 1.0
        cov = np.zeros_like(cov)
    return GaussianComponent.from_moments(mean, cov, ridge_scale=scale)
