"""Exponential-family conditionals with canonical links and weighted IRLS.

Supported families are Binomial (logit link, known number of trials),
Poisson (log link) and the linear Gaussian case (identity link, free
dispersion).  Densities are evaluated in log space throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln

ETA_CLAMP = 30.0

FAMILY_KINDS = ("binomial", "poisson", "gaussian")


class SupportError(ValueError):
    """A response value lies outside the support of the family."""


class SingularDesign(np.linalg.LinAlgError):
    """Weighted information matrix is not invertible after regularization."""


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Family:
    """Response distribution.  Bernoulli is Binomial with a single trial."""

    kind: str
    trials: int | None = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family {self.kind!r}")
        if self.kind == "binomial":
            if self.trials is None or int(self.trials) != self.trials or self.trials < 1:
                raise ValueError("binomial family needs a positive integer number of trials")
            object.__setattr__(self, "trials", int(self.trials))
        elif self.trials is not None:
            raise ValueError(f"{self.kind} family takes no trials")

    @classmethod
    def bernoulli(cls) -> Family:
        return cls("binomial", 1)

    @classmethod
    def binomial(cls, trials: int) -> Family:
        return cls("binomial", trials)

    @classmethod
    def poisson(cls) -> Family:
        return cls("poisson")

    @classmethod
    def gaussian(cls) -> Family:
        return cls("gaussian")

    @property
    def name(self) -> str:
        if self.kind == "binomial" and self.trials == 1:
            return "bernoulli"
        return self.kind

    @property
    def has_dispersion(self) -> bool:
        """Whether the dispersion is a free parameter (counted in BIC)."""
        return self.kind == "gaussian"

    def check_support(self, y) -> None:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise SupportError(f"non-finite response at row {bad}")
        if self.kind == "gaussian":
            return
        integral = y == np.round(y)
        if self.kind == "poisson":
            ok = integral & (y >= 0)
            what = "a nonnegative integer"
        else:
            ok = integral & (y >= 0) & (y <= self.trials)
            what = f"an integer in 0..{self.trials}"
        if not np.all(ok):
            bad = int(np.flatnonzero(~ok)[0])
            raise SupportError(f"response {float(y[bad])!r} at row {bad} is not {what}")


@dataclass(frozen=True)
class GlmComponent:
    """Regression coefficients and dispersion of one component.

    ``dispersion`` is the Gaussian error variance; it is identically 1 for
    Poisson and Binomial, whose dispersion is not a free parameter.
    """

    intercept: float
    slopes: np.ndarray
    dispersion: float = 1.0

    def __post_init__(self):
        slopes = np.atleast_1d(np.asarray(self.slopes, dtype=float))
        if slopes.ndim != 1:
            raise ValueError("slopes must be a vector")
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "dispersion", float(self.dispersion))

    @property
    def d(self) -> int:
        return self.slopes.shape[0]

    @property
    def beta(self) -> np.ndarray:
        """Coefficient vector ``(intercept, slopes...)``."""
        return np.concatenate([[self.intercept], self.slopes])

    @classmethod
    def from_beta(cls, beta, dispersion: float = 1.0) -> GlmComponent:
        beta = np.asarray(beta, dtype=float)
        return cls(beta[0], beta[1:], dispersion)


def canonical_eta(x, comp: GlmComponent):
    """Linear predictor ``intercept + slopes . x``.

    ``x`` may be a single covariate vector of length d or an ``(N, d)``
    matrix, in which case a length-N array is returned.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != comp.d:
        raise ValueError(f"covariate dimension {x.shape[-1]} != {comp.d}")
    return comp.intercept + x @ comp.slopes


def _mean_from_eta(eta, family: Family):
    if family.kind == "gaussian":
        return eta
    eta = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
    if family.kind == "poisson":
        return np.exp(eta)
    return family.trials * expit(eta)


def _var_from_eta(eta, family: Family, dispersion: float = 1.0):
    eta = np.asarray(eta, dtype=float)
    if family.kind == "gaussian":
        return np.full_like(eta, dispersion)
    eta = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
    if family.kind == "poisson":
        return np.exp(eta)
    p = expit(eta)
    return family.trials * p * (1.0 - p)


def _logdensity_eta(y, eta, family: Family, dispersion: float = 1.0):
    """log q(y | eta) for arrays of responses and linear predictors."""
    if family.kind == "gaussian":
        r = y - eta
        return -0.5 * (np.log(2 * np.pi * dispersion) + r * r / dispersion)
    if family.kind == "poisson":
        eta = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
        return y * eta - np.exp(eta) - gammaln(y + 1.0)
    m = family.trials
    log_choose = gammaln(m + 1.0) - gammaln(y + 1.0) - gammaln(m - y + 1.0)
    # y*eta - m*log(1 + e^eta), overflow-free
    return log_choose + y * eta - m * np.logaddexp(0.0, eta)


def conditional_logdensity(y, x, comp: GlmComponent, family: Family):
    """log q(y | x) for one observation or vectorised over rows of ``x``."""
    family.check_support(y)
    eta = canonical_eta(x, comp)
    return _logdensity_eta(np.asarray(y, dtype=float), eta, family, comp.dispersion)


def conditional_mean_var(x, comp: GlmComponent, family: Family):
    """Conditional mean and variance of Y given x."""
    eta = canonical_eta(x, comp)
    mean = _mean_from_eta(eta, family)
    var = _var_from_eta(eta, family, comp.dispersion)
    if np.ndim(eta) == 0:
        return float(mean), float(var)
    return mean, var


def _solve_information(H, g):
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        scale = np.trace(H) / H.shape[0]
        if not np.isfinite(scale) or scale <= 0:
            scale = 1.0
        try:
            L = np.linalg.cholesky(H + 1e-8 * scale * np.eye(H.shape[0]))
        except np.linalg.LinAlgError:
            raise SingularDesign("weighted information matrix is singular") from None
    z = np.linalg.solve(L, g)
    return np.linalg.solve(L.T, z)


@dataclass
class IrlsTrace:
    """Per-iteration weighted log-likelihood values, filled by the solver."""

    objective: list = field(default_factory=list)
    converged: bool = False


def _default_start(y, w, family: Family, d: int) -> np.ndarray:
    ybar = float(np.sum(w * y) / np.sum(w))
    beta = np.zeros(d + 1)
    if family.kind == "poisson":
        beta[0] = np.log(max(ybar, 1e-3))
    elif family.kind == "binomial":
        p = min(max(ybar / family.trials, 1e-3), 1 - 1e-3)
        beta[0] = np.log(p / (1 - p))
    else:
        beta[0] = ybar
    return beta


def irls_weighted_fit(
    X,
    y,
    weights,
    family: Family,
    init: GlmComponent | None = None,
    max_iter: int = 100,
    tol: float = 1e-10,
    trace: IrlsTrace | None = None,
) -> GlmComponent:
    """Maximise ``sum_n w_n log q(y_n | x_n)`` by Fisher scoring.

    Canonical links make Fisher scoring coincide with Newton's method on a
    concave objective; step-halving (at most 20 halvings) keeps the
    weighted log-likelihood non-decreasing.  Zero-weight rows are dropped.
    On hitting ``max_iter`` the best iterate is returned with a
    ``ConvergenceWarning``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    n, d = X.shape
    if y.shape != (n,) or w.shape != (n,):
        raise ValueError("X, y and weights disagree in length")
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    if X.shape[0] < d + 1:
        raise SingularDesign(f"need at least {d + 1} positively weighted rows, got {X.shape[0]}")
    family.check_support(y)
    A = np.column_stack([np.ones(X.shape[0]), X])
    if trace is None:
        trace = IrlsTrace()

    if family.kind == "gaussian":
        H = (A * w[:, None]).T @ A
        beta = _solve_information(H, A.T @ (w * y))
        r = y - A @ beta
        sigma2 = max(float(np.sum(w * r * r) / np.sum(w)), 1e-12)
        comp = GlmComponent.from_beta(beta, sigma2)
        trace.objective.append(float(np.sum(w * _logdensity_eta(y, A @ beta, family, sigma2))))
        trace.converged = True
        return comp

    def objective(b):
        return float(np.sum(w * _logdensity_eta(y, A @ b, family)))

    beta = init.beta.copy() if init is not None else _default_start(y, w, family, d)
    if beta.shape != (d + 1,):
        raise ValueError("initial coefficients have the wrong dimension")
    obj = objective(beta)
    trace.objective.append(obj)
    for _ in range(max_iter):
        eta = A @ beta
        grad = A.T @ (w * (y - _mean_from_eta(eta, family)))
        H = (A * (w * _var_from_eta(eta, family))[:, None]).T @ A
        step = _solve_information(H, grad)
        t = 1.0
        for _halving in range(21):
            cand = beta + t * step
            cand_obj = objective(cand)
            if cand_obj >= obj:
                break
            t *= 0.5
        else:
            # no ascent along the scoring direction: at the optimum to working precision
            trace.converged = True
            break
        delta = np.max(np.abs(cand - beta))
        gain = cand_obj - obj
        beta, obj = cand, cand_obj
        trace.objective.append(obj)
        if delta <= tol * (1.0 + np.max(np.abs(beta))) or gain <= 1e-15 * (1.0 + abs(obj)):
            trace.converged = True
            break
    if not trace.converged:
        warnings.warn(
            f"IRLS did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2
        )
    return GlmComponent.from_beta(beta)
