import json
import math

import numpy as np
import pytest
from scipy import stats

from glgcwm.data import to_csv_text
from glgcwm.em import FitConfig
from glgcwm.exp_family import Family, conditional_mean_var
from glgcwm.sim import (
    DESIGNS,
    GroupSpec,
    Recipe,
    SimSpec,
    SpecError,
    _sample_binomial,
    example4_spec,
    generate,
    replication_study,
)


def test_constant_rate_poisson():
    spec = SimSpec([GroupSpec(4000, (0.0, 0.0), mean=(0.0,), cov=((1.0,),))], Family.poisson(), seed=3)
    data = generate(spec)
    assert abs(data.y.mean() - 1.0) < 3 / math.sqrt(4000)


def test_example4_covariate_means():
    data = generate(example4_spec(seed=11))
    for g, (mu, var) in enumerate([(0.0, 1.5), (5.0, 0.8)]):
        xg = data.X[data.labels == g, 0]
        assert abs(xg.mean() - mu) < 3 * math.sqrt(var) / math.sqrt(len(xg))


@pytest.mark.parametrize("name", sorted(DESIGNS))
def test_exact_group_counts(name):
    spec = DESIGNS[name](5)
    data = generate(spec)
    counts = np.bincount(data.labels)
    assert counts.tolist() == [g.n for g in spec.groups]
    assert data.n == spec.n


def test_determinism_and_seed_sensitivity():
    a = to_csv_text(generate(example4_spec(seed=8)))
    b = to_csv_text(generate(example4_spec(seed=8)))
    c = to_csv_text(generate(example4_spec(seed=9)))
    assert a == b
    assert a != c


@pytest.mark.parametrize(
    "family,beta",
    [(Family.poisson(), (0.5, 0.3)), (Family.binomial(30), (0.0, 1.0)), (Family.gaussian(), (1.0, -2.0))],
    ids=["poisson", "binomial", "gaussian"],
)
def test_conditional_moments_by_bin(family, beta):
    group = GroupSpec(20000, beta, law="uniform", low=(-2.0,), high=(2.0,), dispersion=0.5)
    data = generate(SimSpec([group], family, seed=21))
    x, y = data.X[:, 0], data.y
    edges = np.linspace(-2, 2, 9)
    for lo, hi in zip(edges[:-1], edges[1:]):
        rows = (x >= lo) & (x < hi)
        mean, var = conditional_mean_var(x[rows, None], group.glm, family)
        # compare the bin average of y - E(y|x) with its standard error
        resid = y[rows] - mean
        se = math.sqrt(var.sum()) / rows.sum()
        assert abs(resid.mean()) < 3 * se


def test_binomial_inversion_matches_pmf():
    rng = np.random.default_rng(0)
    p = np.full(50000, 0.3)
    draws = _sample_binomial(rng, 30, p)
    observed = np.bincount(draws, minlength=31)
    expected = stats.binom.pmf(np.arange(31), 30, 0.3) * 50000
    keep = expected > 5
    chi2 = np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep])
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-3
    assert draws.min() >= 0 and draws.max() <= 30


def test_spec_json_round_trip(tmp_path):
    spec = SimSpec(
        [
            GroupSpec(10, (1.0, 0.2, -0.1), mean=(0.0, 1.0), cov=((1.0, 0.3), (0.3, 2.0))),
            GroupSpec(12, (0.0, 0.5, 0.5), law="uniform", low=(0.0, -1.0), high=(1.0, 1.0)),
        ],
        Family.binomial(7),
        seed=99,
        name="mixed",
    )
    path = tmp_path / "spec.json"
    path.write_text(spec.dumps())
    again = SimSpec.load(path)
    assert again == spec
    assert to_csv_text(generate(again)) == to_csv_text(generate(spec))


@pytest.mark.parametrize(
    "obj",
    [
        {"schema": 1, "family": "poisson", "seed": 0, "groups": []},
        {"schema": 2, "family": "poisson", "seed": 0, "groups": []},
        {"schema": 1, "family": "poisson", "seed": 0,
         "groups": [{"n": 0, "beta": [0, 1], "covariate": {"law": "uniform", "low": [0], "high": [1]}}]},
        {"schema": 1, "family": "poisson", "seed": 0,
         "groups": [{"n": 5, "beta": [0, 1], "covariate": {"law": "uniform", "low": [1], "high": [0]}}]},
        {"schema": 1, "family": "poisson", "seed": 0,
         "groups": [{"n": 5, "beta": [0, 1], "covariate": {"law": "gaussian", "mean": [0], "cov": [[-1]]}}]},
        {"schema": 1, "family": "poisson", "seed": 0,
         "groups": [{"n": 5, "beta": [0, 1], "covariate": {"law": "cauchy"}}]},
    ],
)
def test_invalid_specs(obj):
    with pytest.raises(SpecError):
        SimSpec.from_dict(json.loads(json.dumps(obj)))


def test_minimal_spec_loads():
    # the invalid cases above differ from this one by a single field
    obj = {"schema": 1, "family": "poisson", "seed": 0,
           "groups": [{"n": 5, "beta": [0, 1], "covariate": {"law": "uniform", "low": [0], "high": [1]}}]}
    spec = SimSpec.from_dict(obj)
    assert spec.n == 5 and spec.family == Family.poisson()


def test_unknown_family_rejected():
    obj = {"schema": 1, "family": "gamma", "seed": 0,
           "groups": [{"n": 5, "beta": [0, 1], "covariate": {"law": "uniform", "low": [0], "high": [1]}}]}
    with pytest.raises(SpecError):
        SimSpec.from_dict(obj)


def test_replication_identical_arms_have_zero_discrepancy():
    twin = [Recipe("a", "fmr"), Recipe("b", "fmr")]
    summary = replication_study(example4_spec(seed=5), 1, twin, config=FitConfig(n_restarts=2))
    assert summary.discrepancy["a~b"]["values"] == [0.0]
    assert summary.per_recipe["a"]["failures"] == 0


def test_replication_example4_orders_cwm_above_fmr():
    summary = replication_study(example4_spec(seed=6), 3, ["cwm", "fmr"], config=FitConfig(n_restarts=2))
    assert summary.per_recipe["cwm"]["ari"]["mean"] > summary.per_recipe["fmr"]["ari"]["mean"]
    assert summary.n_reps == 3
    assert len(summary.discrepancy["cwm~fmr"]["values"]) == 3
