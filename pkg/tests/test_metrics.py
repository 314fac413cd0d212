import itertools
import math

import numpy as np
import pytest
from helpers import brute_ari_table, brute_rand, glm, set_partitions
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from glgcwm.exp_family import Family
from glgcwm.metrics import (
    EvalReport,
    adjusted_rand_index,
    bic,
    cgof,
    cgof_details,
    coefficient_discrepancy,
    deviance_terms,
    generalized_deviance,
    misclassification_error,
    rand_index,
)


class TestBic:
    def test_zero(self):
        assert bic(0.0, 0, 10) == 0.0

    def test_hand_value(self):
        assert bic(-100.0, 9, 400) == pytest.approx(-200 - 9 * math.log(400), abs=1e-12)
        assert bic(-100.0, 9, 400) == pytest.approx(-253.92, abs=5e-3)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            bic(-1.0, 2, 0)


class TestRand:
    def test_identical(self):
        assert rand_index([0, 1, 2, 2], [0, 1, 2, 2]) == 1.0

    def test_relabeled(self):
        assert rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0

    def test_hand_value(self):
        assert rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(1 / 3, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rand_index([0, 1], [0, 1, 1])


class TestAri:
    def test_identical(self):
        assert adjusted_rand_index([0, 0, 1, 2], [5, 5, 3, 4]) == pytest.approx(1.0, abs=1e-15)

    def test_hand_value_against_enumeration(self):
        a, b = (0, 0, 1, 1), (0, 1, 0, 1)
        parts = [a, b]
        oracle = brute_ari_table(parts)[0, 1]
        assert adjusted_rand_index(a, b) == pytest.approx(oracle, abs=1e-12)
        # the contingency formula gives -1/2 here: index 0, expectation 2/3, maximum 2
        assert adjusted_rand_index(a, b) == pytest.approx(-0.5, abs=1e-15)

    def test_degenerate_is_zero(self):
        assert adjusted_rand_index([0, 0, 0], [0, 0, 0]) == 0.0
        assert adjusted_rand_index([0, 1, 2], [0, 1, 2]) == 0.0

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_exhaustive_small(self, n):
        parts = set_partitions(n, 3)
        table = brute_ari_table(parts)
        for i, a in enumerate(parts):
            for k, b in enumerate(parts):
                assert adjusted_rand_index(a, b) == pytest.approx(table[i, k], abs=1e-12)
                assert rand_index(a, b) == pytest.approx(brute_rand(a, b), abs=1e-15)

    def test_chance_level(self):
        rng = np.random.default_rng(0)
        truth = rng.integers(3, size=200)
        values = [adjusted_rand_index(truth, rng.integers(3, size=200)) for _ in range(200)]
        assert abs(np.mean(values)) < 0.05

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=2, max_size=30), st.permutations(range(4)))
    def test_relabeling_invariance(self, labels, perm):
        a = np.array(labels)
        b = np.roll(a, 1)
        relabeled = np.array(perm)[b]
        assert adjusted_rand_index(a, relabeled) == adjusted_rand_index(a, b)
        assert rand_index(a, relabeled) == rand_index(a, b)
        assert 0.0 <= rand_index(a, b) <= 1.0
        assert adjusted_rand_index(a, b) <= 1.0 + 1e-15


def brute_misclassification(truth, pred):
    truth, pred = np.asarray(truth), np.asarray(pred)
    K = max(truth.max(), pred.max()) + 1
    return min(np.mean(np.array(p)[pred] != truth) for p in itertools.permutations(range(K)))


class TestMisclassification:
    def test_identical(self):
        assert misclassification_error([0, 1, 1], [0, 1, 1]) == 0.0

    def test_permuted(self):
        assert misclassification_error([0, 0, 1, 2], [2, 2, 0, 1]) == 0.0

    def test_hand_value(self):
        assert misclassification_error([0, 0, 0, 1], [0, 0, 1, 1]) == pytest.approx(0.25)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_permutation_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        G = int(rng.integers(2, 6))
        truth = rng.integers(G, size=40)
        pred = np.where(rng.random(40) < 0.6, truth, rng.integers(G, size=40))
        pred = rng.permutation(G)[pred]
        assert misclassification_error(truth, pred) == pytest.approx(brute_misclassification(truth, pred), abs=1e-15)

    def test_unequal_label_counts(self):
        # a prediction with fewer clusters than the truth cannot match the extra group
        assert misclassification_error([0, 0, 1, 1, 2, 2], [0, 0, 1, 1, 1, 1]) == pytest.approx(1 / 3)


class TestCgof:
    def test_single_group_is_pearson(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 1))
        c = glm([0.4, 0.3])
        y = rng.poisson(np.exp(0.4 + 0.3 * X[:, 0])).astype(float)
        mu = np.exp(c.intercept + X[:, 0] * c.slopes[0])
        pearson = np.sum((y - stats.poisson.mean(mu)) ** 2 / stats.poisson.var(mu)) / 100
        assert cgof(X, y, np.zeros(100, int), [c], Family.poisson()) == pytest.approx(pearson, abs=1e-10)

    def test_binomial_two_groups(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(60, 1))
        labels = rng.integers(2, size=60)
        comps = [glm([0.0, 1.0]), glm([1.0, -0.5])]
        y = rng.integers(0, 11, size=60).astype(float)
        total = 0.0
        for n in range(60):
            c = comps[labels[n]]
            p = 1 / (1 + math.exp(-(c.intercept + c.slopes[0] * X[n, 0])))
            total += (y[n] - stats.binom.mean(10, p)) ** 2 / stats.binom.var(10, p)
        assert cgof(X, y, labels, comps, Family.binomial(10)) == pytest.approx(total / 60, abs=1e-10)

    def test_exact_means_give_zero(self):
        X = np.zeros((5, 1))
        y = np.full(5, 15.0)
        assert cgof(X, y, np.zeros(5, int), [glm([0.0, 1.0])], Family.binomial(30)) == 0.0

    def test_saturated_variance_is_skipped(self):
        X = np.array([[0.0], [100.0]])
        y = np.array([1.0, 1.0])
        with pytest.warns(UserWarning):
            value, skipped = cgof_details(X, y, np.zeros(2, int), [glm([0.0, 1.0])], Family.bernoulli())
        assert skipped == 1
        # the remaining row contributes (1 - 0.5)^2 / 0.25 = 1, averaged over N = 2
        assert value == pytest.approx(0.5)


class TestDeviance:
    def test_poisson_single_term(self):
        term = deviance_terms(np.array([2.0]), np.array([1.0]), Family.poisson())[0]
        assert term == pytest.approx(2 * (2 * math.log(2) - 1), abs=1e-15)
        assert term == pytest.approx(0.772588722239781, abs=1e-12)

    def test_binomial_at_mean(self):
        assert deviance_terms(np.array([15.0]), np.array([15.0]), Family.binomial(30))[0] == 0.0

    def test_zero_log_zero(self):
        t = deviance_terms(np.array([0.0, 30.0]), np.array([3.0, 27.0]), Family.binomial(30))
        assert t[0] == pytest.approx(2 * 30 * math.log(30 / 27))
        assert t[1] == pytest.approx(2 * 30 * math.log(30 / 27))
        assert deviance_terms(np.array([0.0]), np.array([2.5]), Family.poisson())[0] == pytest.approx(5.0)

    def test_saturated_fit_is_zero(self):
        X = np.array([[0.0], [1.0], [2.0]])
        c = glm([0.0, math.log(2.0)])
        y = np.exp(0.0 + math.log(2.0) * X[:, 0])  # 1, 2, 4
        gd, gsd = generalized_deviance(X, y, np.zeros(3, int), [c], Family.poisson())
        assert gd == pytest.approx(0.0, abs=1e-12)
        assert gsd == gd

    def test_binomial_scaling(self):
        X = np.zeros((4, 1))
        y = np.array([3.0, 7.0, 0.0, 10.0])
        gd, gsd = generalized_deviance(X, y, np.zeros(4, int), [glm([0.0, 0.0])], Family.binomial(10))
        assert gsd == pytest.approx(gd / 10)
        assert gd > 0

    def test_zero_mean_positive_response_is_infinite(self):
        with pytest.warns(UserWarning):
            gd, _ = generalized_deviance(np.zeros((1, 1)), np.array([2.0]), np.zeros(1, int), [glm([-800.0, 0.0])], Family.poisson())
        assert gd == math.inf

    def test_gaussian_not_supported(self):
        with pytest.raises(ValueError):
            deviance_terms(np.ones(2), np.ones(2), Family.gaussian())

    @settings(max_examples=50, deadline=None)
    @given(
        y=st.lists(st.integers(0, 20), min_size=1, max_size=10),
        mu=st.floats(0.05, 19.95),
    )
    def test_nonnegative(self, y, mu):
        y = np.array(y, dtype=float)
        assert np.all(deviance_terms(y, np.full_like(y, mu), Family.poisson()) >= -1e-12)
        assert np.all(deviance_terms(y, np.full_like(y, mu), Family.binomial(20)) >= -1e-12)


class TestDiscrepancy:
    def test_identical(self):
        b = [glm([1.0, 0.2]), glm([0.0, 0.6])]
        assert coefficient_discrepancy(b, b) == 0.0

    def test_permuted(self):
        a = [[1.0, 0.2], [0.0, 0.6]]
        assert coefficient_discrepancy(a, a[::-1]) == 0.0

    def test_hand_value(self):
        a = [glm([1.0, 0.2]), glm([0.0, 0.6])]
        b = [glm([1.1, 0.2]), glm([0.0, 0.5])]
        assert coefficient_discrepancy(a, b) == pytest.approx(0.05, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            coefficient_discrepancy([[1.0, 2.0]], [[1.0, 2.0], [0.0, 0.0]])

    @pytest.mark.parametrize("seed", range(20))
    def test_pseudometric(self, seed):
        rng = np.random.default_rng(seed)
        G, p = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        a, b, c = (rng.normal(size=(G, p)) for _ in range(3))
        assert coefficient_discrepancy(a, b) == pytest.approx(coefficient_discrepancy(b, a), abs=1e-15)
        assert coefficient_discrepancy(a, b) <= coefficient_discrepancy(a, c) + coefficient_discrepancy(c, b) + 1e-12
        # matching is the minimum over all component permutations
        brute = min(np.abs(a - b[list(perm)]).mean() for perm in itertools.permutations(range(G)))
        assert coefficient_discrepancy(a, b) == pytest.approx(brute, abs=1e-12)


def test_report_serializes():
    r = EvalReport(bic=-1.0, loglik=-0.5, ari=0.9)
    d = r.to_dict()
    assert d["bic"] == -1.0 and d["ari"] == 0.9 and d["rand"] is None
