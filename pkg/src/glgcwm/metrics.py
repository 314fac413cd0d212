"""Model selection and performance indices.

BIC uses the larger-is-better sign convention ``2 loglik - m log N``.
Goodness-of-fit indices (CGOF, generalized deviances) use hard MAP
assignments of the observations to components.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exp_family import ETA_CLAMP, Family, GlmComponent, canonical_eta, conditional_mean_var


def bic(loglik: float, m: int, n: int) -> float:
    if n < 1:
        raise ValueError("N must be at least 1")
    return 2.0 * loglik - m * np.log(n)


def _contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must have equal length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def rand_index(labels_a, labels_b) -> float:
    """Fraction of the C(N,2) pairs on which two partitions agree."""
    table = _contingency(labels_a, labels_b)
    n = table.sum()
    if n < 2:
        raise ValueError("need at least two observations")
    pairs = _comb2(n)
    together = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    return float((pairs + 2 * together - rows - cols) / pairs)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Hubert-Arabie ARI; 0 when the index is undefined (max equals expectation)."""
    table = _contingency(labels_a, labels_b)
    n = table.sum()
    if n < 2:
        raise ValueError("need at least two observations")
    index = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    expected = rows * cols / _comb2(n)
    maximum = 0.5 * (rows + cols)
    if maximum == expected:
        return 0.0
    return float((index - expected) / (maximum - expected))


def misclassification_error(true_labels, predicted_labels) -> float:
    """Mismatch rate under the best one-to-one relabeling of the prediction.

    The optimal relabeling is an assignment problem on the contingency
    table, solved exactly by the Hungarian algorithm.
    """
    table = _contingency(true_labels, predicted_labels)
    rows, cols = linear_sum_assignment(-table)
    return float(1.0 - table[rows, cols].sum() / table.sum())


def _assigned_moments(X, labels, glms, family):
    """Conditional mean and variance under each row's assigned component.

    Also returns a mask of rows whose linear predictor reached the clamp,
    where the variance is zero up to rounding; their mean is set to the
    boundary of the support (0, or M for the binomial upper end).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels, dtype=int)
    mean = np.empty(X.shape[0])
    var = np.empty(X.shape[0])
    eta = np.zeros(X.shape[0])
    for g, comp in enumerate(glms):
        rows = labels == g
        if np.any(rows):
            mean[rows], var[rows] = conditional_mean_var(X[rows], comp, family)
            eta[rows] = canonical_eta(X[rows], comp)
    if family.kind == "poisson":
        saturated = eta <= -ETA_CLAMP
        mean[saturated] = 0.0
    elif family.kind == "binomial":
        saturated = np.abs(eta) >= ETA_CLAMP
        mean[saturated] = np.where(eta[saturated] > 0, family.trials, 0.0)
    else:
        saturated = np.zeros(X.shape[0], dtype=bool)
    return mean, var, saturated


def cgof_details(X, y, labels, glms, family: Family) -> tuple[float, int]:
    """CGOF value and the number of points skipped for zero conditional variance."""
    y = np.asarray(y, dtype=float)
    mean, var, saturated = _assigned_moments(X, labels, glms, family)
    ok = np.isfinite(var) & (var > 0) & ~saturated
    skipped = int(np.sum(~ok))
    if skipped:
        warnings.warn(f"cgof: skipped {skipped} points with zero conditional variance", stacklevel=2)
    resid = (y[ok] - mean[ok]) ** 2 / var[ok]
    return float(resid.sum() / y.shape[0]), skipped


def cgof(X, y, labels, glms, family: Family) -> float:
    """Group-weighted generalized Pearson statistic divided by N."""
    return cgof_details(X, y, labels, glms, family)[0]


def _xlogy_ratio(a, b):
    """a * log(a / b) with 0 log 0 = 0; +inf when a > 0 and b <= 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros_like(a)
    pos = a > 0
    with np.errstate(divide="ignore"):
        out[pos] = np.where(b[pos] > 0, a[pos] * np.log(a[pos] / np.where(b[pos] > 0, b[pos], 1.0)), np.inf)
    return out


def deviance_terms(y, mean, family: Family) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if family.kind == "poisson":
        return 2.0 * (_xlogy_ratio(y, mean) - (y - mean))
    if family.kind == "binomial":
        m = family.trials
        return 2.0 * (_xlogy_ratio(y, mean) + _xlogy_ratio(m - y, m - mean))
    raise ValueError("generalized deviance is defined for binomial and poisson families only")


def generalized_deviance(X, y, labels, glms, family: Family) -> tuple[float, float]:
    """Generalized deviance and its scaled version ``(GD, GSD)``.

    GSD is GD/M for Binomial and GD for Poisson.  An infinite contribution
    (zero fitted mean with positive response) is reported as ``inf``.
    """
    mean, _, _ = _assigned_moments(X, labels, glms, family)
    terms = deviance_terms(y, mean, family)
    bad = ~np.isfinite(terms)
    if np.any(bad):
        warnings.warn(
            f"generalized deviance is infinite at rows {np.flatnonzero(bad)[:5].tolist()}", stacklevel=2
        )
    gd = float(terms.sum())
    gsd = gd / family.trials if family.kind == "binomial" else gd
    return gd, gsd


def coefficient_discrepancy(betas_a, betas_b) -> float:
    """Mean absolute coefficient difference after optimal component matching."""
    A = np.array([c.beta if isinstance(c, GlmComponent) else np.asarray(c, float) for c in betas_a])
    B = np.array([c.beta if isinstance(c, GlmComponent) else np.asarray(c, float) for c in betas_b])
    if A.shape != B.shape:
        raise ValueError(f"coefficient sets have shapes {A.shape} and {B.shape}")
    cost = np.abs(A[:, None, :] - B[None, :, :]).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / A.size)


@dataclass
class EvalReport:
    bic: float
    loglik: float
    cgof: float | None = None
    cgof_skipped: int = 0
    gd: float | None = None
    gsd: float | None = None
    misclassification: float | None = None
    rand: float | None = None
    ari: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)
