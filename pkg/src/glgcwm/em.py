"""EM fitting of generalized linear Gaussian cluster-weighted models.

Each component is the product of a Gaussian covariate marginal and a GLM
conditional for the response.  Three constraint modes are supported:

``none``
    free means, covariances and weights;
``common-gaussian``
    one Gaussian shared by all components, which makes the fitted
    regressions and weights coincide with a finite mixture of GLMs;
``common-sigma-equal-weights``
    shared covariance and weights fixed at 1/G, which makes the posterior
    coincide with a GLM mixture whose weights follow a multinomial logit
    in the covariates.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .exp_family import (
    Family,
    _logdensity_eta,
    canonical_eta,
    irls_weighted_fit,
)
from .gaussian import DegenerateComponent, GaussianComponent, mvn_logpdf, weighted_mean_cov
from .metrics import bic as bic_value


class Constraint(str, Enum):
    NONE = "none"
    COMMON_GAUSSIAN = "common-gaussian"
    COMMON_SIGMA_EQUAL_WEIGHTS = "common-sigma-equal-weights"


class InitStrategy(str, Enum):
    RANDOM_PARTITION = "random"
    KMEANS_ON_X = "kmeans"
    GIVEN_LABELS = "given"


class AllRestartsFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class CwmModel:
    weights: np.ndarray
    gaussians: tuple
    glms: tuple
    family: Family
    constraint: Constraint = Constraint.NONE

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "gaussians", tuple(self.gaussians))
        object.__setattr__(self, "glms", tuple(self.glms))
        object.__setattr__(self, "constraint", Constraint(self.constraint))
        if not (len(w) == len(self.gaussians) == len(self.glms) >= 1):
            raise ValueError("weights, gaussians and glms must have the same positive length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixing weights must be positive and sum to 1")
        if len({g.d for g in self.gaussians} | {c.d for c in self.glms}) != 1:
            raise ValueError("components disagree on the covariate dimension")

    @property
    def G(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.gaussians[0].d

    def permuted(self, order) -> CwmModel:
        order = list(order)
        return CwmModel(
            self.weights[order],
            [self.gaussians[i] for i in order],
            [self.glms[i] for i in order],
            self.family,
            self.constraint,
        )


@dataclass
class FitConfig:
    max_iter: int = 500
    epsilon: float = 0.05
    n_restarts: int = 10
    init_strategy: InitStrategy = InitStrategy.KMEANS_ON_X
    rng_seed: int = 0
    init_labels: np.ndarray | None = None
    max_reseeds: int = 3
    irls_max_iter: int = 100
    threads: int | None = None

    def __post_init__(self):
        if self.max_iter < 3:
            raise ValueError("max_iter must be at least 3 for the Aitken stopping rule")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_restarts < 0:
            raise ValueError("n_restarts must be nonnegative")
        self.init_strategy = InitStrategy(self.init_strategy)
        if self.init_strategy is InitStrategy.GIVEN_LABELS and self.init_labels is None:
            raise ValueError("init_strategy 'given' requires init_labels")


@dataclass
class FitResult:
    """Outcome of the best restart.  ``model`` is a CWM, FMR or FMRC model."""

    model: object
    loglik_trace: np.ndarray
    n_iter: int
    converged: bool
    bic: float
    responsibilities: np.ndarray
    n_params: int
    seed: int = 0
    restart: int = 0
    n_failed: int = 0
    all_traces: list = field(default_factory=list, repr=False)

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])

    @property
    def labels(self) -> np.ndarray:
        return hard_labels(self.responsibilities)


def as_rows(x, d: int) -> np.ndarray:
    """Covariates as an (N, d) array; a 1-D input is one point, or N scalars when d == 1."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[:, None] if d == 1 else x[None, :]
    return x


def component_logdensities(model: CwmModel, X, y) -> np.ndarray:
    """(N, G) matrix of ``log pi_g + log phi_g(x_n) + log q_g(y_n | x_n)``."""
    X = as_rows(X, model.d)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    model.family.check_support(y)
    cols = []
    for w, gauss, glm in zip(model.weights, model.gaussians, model.glms):
        eta = canonical_eta(X, glm)
        cols.append(
            np.log(w) + mvn_logpdf(X, gauss) + _logdensity_eta(y, eta, model.family, glm.dispersion)
        )
    return np.column_stack(cols)


def joint_logdensity(model: CwmModel, x, y):
    """log p(x, y) under the mixture, via log-sum-exp over components."""
    single = np.ndim(y) == 0
    out = logsumexp(component_logdensities(model, x, y), axis=1)
    return float(out[0]) if single else out


def posterior_from_logdens(logdens: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalize a (N, G) log-density matrix into responsibilities and total log-likelihood."""
    lse = logsumexp(logdens, axis=1)
    tau = np.exp(logdens - lse[:, None])
    tau /= tau.sum(axis=1, keepdims=True)
    return tau, float(np.sum(lse))


def e_step(model: CwmModel, data: Dataset) -> tuple[np.ndarray, float]:
    if data.d != model.d:
        raise ValueError(f"data has d={data.d}, model has d={model.d}")
    return posterior_from_logdens(component_logdensities(model, data.X, data.y))


def hard_labels(tau) -> np.ndarray:
    """MAP component per row; ``argmax`` breaks ties towards the lowest index."""
    return np.argmax(np.asarray(tau), axis=1)


def _check_component_mass(tau: np.ndarray, d: int) -> np.ndarray:
    mass = tau.sum(axis=0)
    if np.any(mass < d + 1):
        g = int(np.argmin(mass))
        raise DegenerateComponent(f"component {g} has effective weight {mass[g]:.3g} < {d + 1}")
    return mass


def fit_glms(data: Dataset, tau, family: Family, prev_glms=None, irls_max_iter: int = 100) -> list:
    glms = []
    for g in range(tau.shape[1]):
        init = prev_glms[g] if prev_glms is not None else None
        glms.append(
            irls_weighted_fit(data.X, data.y, tau[:, g], family, init=init, max_iter=irls_max_iter)
        )
    return glms


def m_step(
    data: Dataset,
    tau,
    family: Family,
    constraint: Constraint = Constraint.NONE,
    prev: CwmModel | None = None,
    irls_max_iter: int = 100,
) -> CwmModel:
    tau = np.asarray(tau, dtype=float)
    constraint = Constraint(constraint)
    X = data.X
    n, d = X.shape
    G = tau.shape[1]
    mass = _check_component_mass(tau, d)

    if constraint is Constraint.COMMON_SIGMA_EQUAL_WEIGHTS:
        weights = np.full(G, 1.0 / G)
        means = (tau.T @ X) / mass[:, None]
        pooled = np.zeros((d, d))
        for g in range(G):
            diff = X - means[g]
            pooled += (diff * tau[:, g][:, None]).T @ diff
        pooled /= n
        # regularize once so every component shares the identical matrix
        shared = GaussianComponent.from_moments(means[0], pooled)
        gaussians = [
            GaussianComponent(means[g], shared.covariance, shared.chol, shared.logdet)
            for g in range(G)
        ]
    else:
        weights = mass / n
        weights = weights / weights.sum()
        if constraint is Constraint.COMMON_GAUSSIAN:
            common = weighted_mean_cov(X, np.ones(n))
            gaussians = [common] * G
        else:
            gaussians = [weighted_mean_cov(X, tau[:, g], d + 1) for g in range(G)]

    glms = fit_glms(data, tau, family, prev.glms if prev is not None else None, irls_max_iter)
    return CwmModel(weights, gaussians, glms, family, constraint)


def free_param_count(G: int, d: int, family: Family, constraint: Constraint = Constraint.NONE) -> int:
    constraint = Constraint(constraint)
    cov = d * (d + 1) // 2
    glm = G * (d + 1) + (G if family.has_dispersion else 0)
    if constraint is Constraint.NONE:
        return (G - 1) + G * d + G * cov + glm
    if constraint is Constraint.COMMON_GAUSSIAN:
        return (G - 1) + d + cov + glm
    return G * d + cov + glm


def aitken_converged(trace, epsilon: float) -> bool:
    """Aitken-accelerated stopping rule on the last three log-likelihoods.

    Stops when the extrapolated limit is within ``epsilon`` of the previous
    value.  A vanishing previous increment counts as converged; an
    acceleration ``a >= 1`` falls back to the plain increment.
    """
    if len(trace) < 3:
        return False
    l_prev, l_cur, l_next = trace[-3], trace[-2], trace[-1]
    denom = l_cur - l_prev
    if abs(denom) < 1e-12:
        return True
    a = (l_next - l_cur) / denom
    if a >= 1:
        return (l_next - l_cur) < epsilon
    l_inf = l_cur + (l_next - l_cur) / (1.0 - a)
    return (l_inf - l_cur) < epsilon


def one_hot(labels, G: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.min() < 0 or labels.max() >= G:
        raise ValueError(f"labels must lie in 0..{G - 1}")
    tau = np.zeros((labels.shape[0], G))
    tau[np.arange(labels.shape[0]), labels] = 1.0
    return tau


def run_em(
    tau0: np.ndarray,
    m_step_fn: Callable,
    e_step_fn: Callable,
    config: FitConfig,
):
    """Generic EM loop starting with an M-step on ``tau0``.

    Returns ``(model, tau, trace, converged)`` where ``model`` and ``tau``
    correspond to the last log-likelihood in ``trace``.
    """
    model = m_step_fn(tau0, None)
    trace = []
    converged = False
    for it in range(config.max_iter):
        tau, ll = e_step_fn(model)
        trace.append(ll)
        if aitken_converged(trace, config.epsilon):
            converged = True
            break
        if it + 1 < config.max_iter:
            model = m_step_fn(tau, model)
    return model, tau, np.array(trace), converged


def kmeans_labels(X, G: int, rng: np.random.Generator, n_iter: int = 10) -> np.ndarray:
    """Hard k-means on the covariates: k-means++ seeding, then Lloyd iterations."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, G):
        d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[idx])
    centers = np.array(centers)
    labels = np.zeros(n, dtype=int)
    for _ in range(n_iter):
        labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        for g in range(G):
            if np.any(labels == g):
                centers[g] = X[labels == g].mean(axis=0)
    return labels


def random_partition(n: int, G: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(G, size=n)


def _thread_count(config: FitConfig) -> int:
    if config.threads is not None:
        return max(1, int(config.threads))
    env = os.environ.get("CWM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def fit_with_restarts(data: Dataset, G: int, config: FitConfig, run_from_labels: Callable):
    """Run ``run_from_labels(labels)`` from each initial partition; keep the best.

    Initial partitions: the given labels, or k-means on X followed by
    ``n_restarts`` random partitions, or ``n_restarts`` random partitions
    alone.  A start that collapses a component is re-seeded with a fresh
    random partition up to ``max_reseeds`` times before being dropped.
    Returns ``(best_index, best_output, outputs, n_failed)``; ``best_output``
    is ``(model, tau, trace, converged)``.
    """
    root = np.random.SeedSequence(config.rng_seed)
    init_ss, reseed_ss = root.spawn(2)
    rng = np.random.default_rng(init_ss)
    n = data.n
    if config.init_strategy is InitStrategy.GIVEN_LABELS:
        starts = [np.asarray(config.init_labels, dtype=int)]
    else:
        starts = []
        extras = config.n_restarts
        if config.init_strategy is InitStrategy.KMEANS_ON_X:
            starts.append(kmeans_labels(data.X, G, rng))
        else:
            extras = max(extras, 1)
        starts.extend(random_partition(n, G, rng) for _ in range(extras))
    reseed_rngs = [np.random.default_rng(s) for s in reseed_ss.spawn(len(starts))]

    def attempt(i):
        labels = starts[i]
        failures = 0
        for _ in range(config.max_reseeds + 1):
            try:
                return run_from_labels(labels), failures
            except (DegenerateComponent, np.linalg.LinAlgError, FloatingPointError):
                failures += 1
                labels = random_partition(n, G, reseed_rngs[i])
        return None, failures

    threads = min(_thread_count(config), len(starts))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(attempt, range(len(starts))))
    else:
        outputs = [attempt(i) for i in range(len(starts))]

    n_failed = sum(f for _, f in outputs)
    best = None
    for i, (out, _) in enumerate(outputs):
        if out is None:
            continue
        trace = out[2]
        key = (trace[-1], -len(trace))
        if best is None or key > best[0]:
            best = (key, i, out)
    if best is None:
        raise AllRestartsFailed(f"all {len(starts)} starts collapsed a component")
    return best[1], best[2], [o for o, _ in outputs], n_failed


def _validate_fit_inputs(data: Dataset, G: int, family: Family) -> None:
    if G < 1:
        raise ValueError("G must be at least 1")
    if data.n <= G * (data.d + 1):
        raise ValueError(f"need more than G*(d+1) = {G * (data.d + 1)} observations, got {data.n}")
    data.check_family(family)


def fit(
    data: Dataset,
    G: int,
    family: Family,
    constraint: Constraint = Constraint.NONE,
    config: FitConfig | None = None,
) -> FitResult:
    """Fit a cluster-weighted model by EM with multiple starts."""
    config = config or FitConfig()
    constraint = Constraint(constraint)
    _validate_fit_inputs(data, G, family)

    def m_fn(tau, prev):
        return m_step(data, tau, family, constraint, prev, config.irls_max_iter)

    def e_fn(model):
        return e_step(model, data)

    def run(labels):
        return run_em(one_hot(labels, G), m_fn, e_fn, config)

    idx, (model, tau, trace, converged), outputs, n_failed = fit_with_restarts(data, G, config, run)
    m = free_param_count(G, data.d, family, constraint)
    return FitResult(
        model=model,
        loglik_trace=trace,
        n_iter=len(trace),
        converged=converged,
        bic=bic_value(trace[-1], m, data.n),
        responsibilities=tau,
        n_params=m,
        seed=config.rng_seed,
        restart=idx,
        n_failed=n_failed,
        all_traces=[o[2] for o in outputs if o is not None],
    )
