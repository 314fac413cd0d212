"""Shared builders and brute-force oracles for the test suite."""

import itertools

import numpy as np

from glgcwm.em import Constraint, CwmModel
from glgcwm.exp_family import Family, GlmComponent
from glgcwm.gaussian import GaussianComponent
from glgcwm.mixtures import FmrModel

# Poisson CWM design with two groups; the second entries of each pair belong to group 2
EX4 = {
    "weights": (0.375, 0.625),
    "means": (0.0, 5.0),
    "variances": (1.5, 0.8),
    "betas": ((1.0, 0.2), (0.0, 0.5)),
}


def glm(beta, dispersion=1.0):
    return GlmComponent.from_beta(np.asarray(beta, dtype=float), dispersion)


def example4_model(constraint=Constraint.NONE):
    gaussians = [GaussianComponent.from_moments([m], [[v]]) for m, v in zip(EX4["means"], EX4["variances"])]
    glms = [glm(b) for b in EX4["betas"]]
    return CwmModel(np.array(EX4["weights"]), gaussians, glms, Family.poisson(), constraint)


def random_family(rng):
    kind = rng.integers(4)
    if kind == 0:
        return Family.poisson()
    if kind == 1:
        return Family.bernoulli()
    if kind == 2:
        return Family.binomial(int(rng.integers(2, 40)))
    return Family.gaussian()


def random_spd(rng, d):
    A = rng.normal(size=(d, d))
    return A @ A.T + 0.5 * np.eye(d)


def random_glms(rng, G, d, family):
    return [
        GlmComponent(
            float(rng.normal(0, 1)),
            rng.normal(0, 0.5, size=d),
            float(rng.uniform(0.3, 3.0)) if family.kind == "gaussian" else 1.0,
        )
        for _ in range(G)
    ]


def random_weights(rng, G):
    w = rng.dirichlet(np.ones(G)) + 0.01
    return w / w.sum()


def random_response(rng, X, family):
    n = X.shape[0]
    if family.kind == "poisson":
        return rng.poisson(3.0, size=n).astype(float)
    if family.kind == "binomial":
        return rng.integers(0, family.trials + 1, size=n).astype(float)
    return rng.normal(0, 3, size=n)


def fmr_from_cwm(model):
    return FmrModel(model.weights, model.glms, model.family)


def set_partitions(n, max_blocks):
    """All labelings of n items into at most max_blocks blocks, as restricted growth strings."""
    out = []

    def grow(prefix, used):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for b in range(min(used + 1, max_blocks)):
            grow(prefix + [b], max(used, b + 1))

    grow([], 0)
    return out


def together_matrix(labelings):
    """Row k holds, for every pair i < j, whether labeling k puts i and j in one block."""
    L = np.asarray(labelings)
    i, j = np.triu_indices(L.shape[1], k=1)
    return (L[:, i] == L[:, j]).astype(float)


def brute_rand(a, b):
    """Rand index by walking every pair."""
    n = len(a)
    agree = total = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += 1
            agree += (a[i] == a[j]) == (b[i] == b[j])
    return agree / total


def brute_ari_table(partitions):
    """ARI for every pair of partitions, with the chance expectation taken over all
    relabelings of the items of the second partition (enumeration of n! permutations)."""
    P = np.asarray(partitions)
    n = P.shape[1]
    T = together_matrix(P)
    perms = np.array(list(itertools.permutations(range(n))))
    out = np.empty((len(P), len(P)))
    for k, b in enumerate(P):
        Tb_perm = together_matrix(b[perms])
        expected = (Tb_perm @ T.T).mean(axis=0)
        index = T @ T[k]
        maximum = 0.5 * (T.sum(axis=1) + T[k].sum())
        with np.errstate(invalid="ignore", divide="ignore"):
            val = (index - expected) / (maximum - expected)
        val[np.isclose(maximum, expected, rtol=0, atol=1e-12)] = 0.0
        out[:, k] = val
    return out
