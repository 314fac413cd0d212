"""Finite mixtures of GLMs, with constant or concomitant (multinomial logit) weights.

These model only the conditional law of y given x.  They are nested in the
cluster-weighted model: a shared Gaussian marginal reproduces the constant
weight mixture, and a shared covariance with equal weights reproduces the
concomitant mixture with parameters given by ``cwm_to_fmrc_alphas``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .data import Dataset
from .em import (
    FitConfig,
    FitResult,
    _check_component_mass,
    _validate_fit_inputs,
    as_rows,
    fit_glms,
    fit_with_restarts,
    one_hot,
    posterior_from_logdens,
    run_em,
)
from .exp_family import Family, _logdensity_eta, _solve_information, canonical_eta
from .metrics import bic as bic_value

ALPHA_BOUND = 50.0


@dataclass(frozen=True)
class ConcomitantParams:
    """Multinomial-logit gating parameters with component 0 as the zero baseline."""

    alpha0: np.ndarray
    alpha1: np.ndarray

    def __post_init__(self):
        a0 = np.atleast_1d(np.asarray(self.alpha0, dtype=float))
        a1 = np.atleast_2d(np.asarray(self.alpha1, dtype=float))
        if a1.shape[0] != a0.shape[0]:
            raise ValueError("alpha0 and alpha1 disagree on the number of components")
        if a0[0] != 0 or np.any(a1[0] != 0):
            raise ValueError("the first component must be the zero baseline")
        object.__setattr__(self, "alpha0", a0)
        object.__setattr__(self, "alpha1", a1)

    @property
    def G(self) -> int:
        return self.alpha0.shape[0]

    @classmethod
    def zeros(cls, G: int, d: int) -> ConcomitantParams:
        return cls(np.zeros(G), np.zeros((G, d)))

    @classmethod
    def rebased(cls, alpha0, alpha1) -> ConcomitantParams:
        """Shift all rows so the first is zero; the weights are unchanged."""
        a0 = np.asarray(alpha0, dtype=float)
        a1 = np.atleast_2d(np.asarray(alpha1, dtype=float))
        return cls(a0 - a0[0], a1 - a1[0])

    def flat(self) -> np.ndarray:
        """Free parameters: rows 1..G-1 of ``[alpha0 | alpha1]``, row-major."""
        return np.column_stack([self.alpha0, self.alpha1])[1:].ravel()

    @classmethod
    def from_flat(cls, vec, G: int, d: int) -> ConcomitantParams:
        rows = np.vstack([np.zeros(d + 1), np.asarray(vec, dtype=float).reshape(G - 1, d + 1)])
        return cls(rows[:, 0], rows[:, 1:])


@dataclass(frozen=True)
class FmrModel:
    weights: np.ndarray
    glms: tuple
    family: Family

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.glms) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive, sum to 1, and match the components")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "glms", tuple(self.glms))

    @property
    def G(self) -> int:
        return len(self.glms)

    @property
    def d(self) -> int:
        return self.glms[0].d


@dataclass(frozen=True)
class FmrcModel:
    concomitant: ConcomitantParams
    glms: tuple
    family: Family

    def __post_init__(self):
        object.__setattr__(self, "glms", tuple(self.glms))
        if self.concomitant.G != len(self.glms):
            raise ValueError("concomitant parameters do not match the components")

    @property
    def G(self) -> int:
        return len(self.glms)

    @property
    def d(self) -> int:
        return self.glms[0].d


def log_concomitant_weights(x, c: ConcomitantParams) -> np.ndarray:
    X = as_rows(x, c.alpha1.shape[1])
    return log_softmax(c.alpha0[None, :] + X @ c.alpha1.T, axis=1)


def concomitant_weights(x, c: ConcomitantParams) -> np.ndarray:
    """Multinomial-logit mixing weights at a point (length G) or rows of X (N, G)."""
    out = np.exp(log_concomitant_weights(x, c))
    return out[0] if np.ndim(x) == 1 and np.size(x) == c.alpha1.shape[1] else out


def cwm_to_fmrc_alphas(means, sigma) -> ConcomitantParams:
    """Concomitant parameters implied by Gaussian marginals with shared covariance.

    ``alpha_g1 = Sigma^{-1} mu_g`` and ``alpha_g0 = -mu_g' Sigma^{-1} mu_g / 2``,
    rebased on the first component.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("covariance is not positive definite") from None
    prec_means = np.linalg.solve(chol.T, np.linalg.solve(chol, means.T)).T
    alpha1 = prec_means
    alpha0 = -0.5 * np.sum(means * prec_means, axis=1)
    return ConcomitantParams.rebased(alpha0, alpha1)


def _glm_logdens(glms, family, X, y) -> np.ndarray:
    return np.column_stack(
        [_logdensity_eta(y, canonical_eta(X, c), family, c.dispersion) for c in glms]
    )


def fmr_logdensities(model: FmrModel, X, y) -> np.ndarray:
    X = as_rows(X, model.d)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    model.family.check_support(y)
    return _glm_logdens(model.glms, model.family, X, y) + np.log(model.weights)[None, :]


def fmrc_logdensities(model: FmrcModel, X, y) -> np.ndarray:
    X = as_rows(X, model.d)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    model.family.check_support(y)
    return _glm_logdens(model.glms, model.family, X, y) + log_concomitant_weights(X, model.concomitant)


def fmr_posterior(model: FmrModel, data: Dataset) -> tuple[np.ndarray, float]:
    return posterior_from_logdens(fmr_logdensities(model, data.X, data.y))


def fmrc_posterior(model: FmrcModel, data: Dataset) -> tuple[np.ndarray, float]:
    return posterior_from_logdens(fmrc_logdensities(model, data.X, data.y))


def fmr_param_count(G: int, d: int, family: Family) -> int:
    return (G - 1) + G * (d + 1) + (G if family.has_dispersion else 0)


def fmrc_param_count(G: int, d: int, family: Family) -> int:
    return (G - 1) * (d + 1) + G * (d + 1) + (G if family.has_dispersion else 0)


def fit_concomitant(X, tau, init: ConcomitantParams | None = None, max_iter: int = 25) -> ConcomitantParams:
    """Weighted multinomial logistic regression with responsibilities as soft targets.

    Newton's method with step-halving from ``init``; coefficients are
    clamped to ``|alpha| <= 50`` (a sign of separation) with a warning.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    tau = np.asarray(tau, dtype=float)
    n, d = X.shape
    G = tau.shape[1]
    if init is None:
        init = ConcomitantParams.zeros(G, d)
    if G == 1:
        return init
    A = np.column_stack([np.ones(n), X])
    K = G - 1
    p_dim = d + 1

    def objective(vec):
        c = ConcomitantParams.from_flat(vec, G, d)
        return float(np.sum(tau * log_concomitant_weights(X, c)))

    theta = init.flat()
    obj = objective(theta)
    start_theta, start_obj = theta, obj
    for _ in range(max_iter):
        probs = np.exp(log_concomitant_weights(X, ConcomitantParams.from_flat(theta, G, d)))
        grad = (A.T @ (tau[:, 1:] - probs[:, 1:])).T.ravel()
        info = np.empty((K * p_dim, K * p_dim))
        for j in range(K):
            for k in range(j, K):
                w = probs[:, j + 1] * ((j == k) - probs[:, k + 1])
                block = (A * w[:, None]).T @ A
                info[j * p_dim:(j + 1) * p_dim, k * p_dim:(k + 1) * p_dim] = block
                info[k * p_dim:(k + 1) * p_dim, j * p_dim:(j + 1) * p_dim] = block.T
        try:
            step = _solve_information(info, grad)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        for _halving in range(21):
            cand = theta + t * step
            cand_obj = objective(cand)
            if cand_obj >= obj:
                break
            t *= 0.5
        else:
            break
        moved = np.max(np.abs(cand - theta))
        theta, obj = cand, cand_obj
        if moved < 1e-10 * (1.0 + np.max(np.abs(theta))):
            break
    if np.any(np.abs(theta) > ALPHA_BOUND):
        warnings.warn("concomitant coefficients clamped at |alpha| <= 50 (separation)", stacklevel=2)
        theta = np.clip(theta, -ALPHA_BOUND, ALPHA_BOUND)
        if objective(theta) < start_obj:
            theta = start_theta
    return ConcomitantParams.from_flat(theta, G, d)


def _fmr_m_step(data: Dataset, tau, family: Family, prev: FmrModel | None, irls_max_iter: int) -> FmrModel:
    mass = _check_component_mass(tau, data.d)
    weights = mass / data.n
    weights = weights / weights.sum()
    glms = fit_glms(data, tau, family, prev.glms if prev is not None else None, irls_max_iter)
    return FmrModel(weights, glms, family)


def _fmrc_m_step(data: Dataset, tau, family: Family, prev: FmrcModel | None, irls_max_iter: int) -> FmrcModel:
    _check_component_mass(tau, data.d)
    glms = fit_glms(data, tau, family, prev.glms if prev is not None else None, irls_max_iter)
    conc = fit_concomitant(data.X, tau, prev.concomitant if prev is not None else None)
    return FmrcModel(conc, glms, family)


def _fit(data, G, family, config, m_fn, e_fn, n_params) -> FitResult:
    def run(labels):
        return run_em(one_hot(labels, G), m_fn, e_fn, config)

    idx, (model, tau, trace, converged), outputs, n_failed = fit_with_restarts(data, G, config, run)
    return FitResult(
        model=model,
        loglik_trace=trace,
        n_iter=len(trace),
        converged=converged,
        bic=bic_value(trace[-1], n_params, data.n),
        responsibilities=tau,
        n_params=n_params,
        seed=config.rng_seed,
        restart=idx,
        n_failed=n_failed,
        all_traces=[o[2] for o in outputs if o is not None],
    )


def fit_fmr(data: Dataset, G: int, family: Family, config: FitConfig | None = None) -> FitResult:
    """EM for a finite mixture of GLMs with constant weights."""
    config = config or FitConfig()
    _validate_fit_inputs(data, G, family)
    return _fit(
        data,
        G,
        family,
        config,
        lambda tau, prev: _fmr_m_step(data, tau, family, prev, config.irls_max_iter),
        lambda model: fmr_posterior(model, data),
        fmr_param_count(G, data.d, family),
    )


def fit_fmrc(data: Dataset, G: int, family: Family, config: FitConfig | None = None) -> FitResult:
    """EM for a finite mixture of GLMs with multinomial-logit concomitant weights.

    The gating parameters start at zero (uniform weights) on the first
    M-step from the initial partition.
    """
    config = config or FitConfig()
    _validate_fit_inputs(data, G, family)
    return _fit(
        data,
        G,
        family,
        config,
        lambda tau, prev: _fmrc_m_step(data, tau, family, prev, config.irls_max_iter),
        lambda model: fmrc_posterior(model, data),
        fmrc_param_count(G, data.d, family),
    )
