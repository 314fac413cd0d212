"""Seeded data generators and replication studies.

Each group draws its covariates from a Gaussian or a per-dimension uniform
law, then responses from the family with mean ``link^-1(b0 + b1.x)``.
Group g uses its own child stream of ``SeedSequence(seed)``, so a design
is reproducible from its seed alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binom

from .data import Dataset
from .em import Constraint, FitConfig, fit
from .exp_family import Family, GlmComponent, _mean_from_eta, canonical_eta
from .metrics import adjusted_rand_index, coefficient_discrepancy, misclassification_error
from .mixtures import fit_fmr, fit_fmrc

SCHEMA_VERSION = 1
BINOMIAL_INVERSION_MAX = 64


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class GroupSpec:
    n: int
    beta: tuple
    law: str = "gaussian"
    mean: tuple = ()
    cov: tuple = ()
    low: tuple = ()
    high: tuple = ()
    dispersion: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise SpecError("group size must be a positive integer")
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        d = len(beta) - 1
        if d < 1:
            raise SpecError("beta needs an intercept and at least one slope")
        if self.law == "gaussian":
            mean = np.asarray(self.mean, dtype=float).reshape(-1)
            cov = np.asarray(self.cov, dtype=float).reshape(d, d) if np.size(self.cov) == d * d else None
            if mean.shape != (d,) or cov is None:
                raise SpecError(f"gaussian law needs a mean of length {d} and a {d}x{d} covariance")
            if not np.allclose(cov, cov.T):
                raise SpecError("covariance must be symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise SpecError("covariance must be positive definite") from None
            object.__setattr__(self, "mean", tuple(mean))
            object.__setattr__(self, "cov", tuple(map(tuple, cov)))
        elif self.law == "uniform":
            low = np.asarray(self.low, dtype=float).reshape(-1)
            high = np.asarray(self.high, dtype=float).reshape(-1)
            if low.shape != (d,) or high.shape != (d,) or np.any(low >= high):
                raise SpecError(f"uniform law needs bounds low < high of length {d}")
            object.__setattr__(self, "low", tuple(low))
            object.__setattr__(self, "high", tuple(high))
        else:
            raise SpecError(f"unknown covariate law {self.law!r}")
        if not self.dispersion > 0:
            raise SpecError("dispersion must be positive")

    @property
    def d(self) -> int:
        return len(self.beta) - 1

    @property
    def glm(self) -> GlmComponent:
        return GlmComponent.from_beta(self.beta, self.dispersion)

    def to_dict(self) -> dict:
        out = {"n": int(self.n), "beta": list(self.beta), "dispersion": self.dispersion}
        if self.law == "gaussian":
            out["covariate"] = {"law": "gaussian", "mean": list(self.mean), "cov": [list(r) for r in self.cov]}
        else:
            out["covariate"] = {"law": "uniform", "low": list(self.low), "high": list(self.high)}
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> GroupSpec:
        try:
            cov = dict(obj["covariate"])
            law = cov.pop("law")
            return cls(n=obj["n"], beta=tuple(obj["beta"]), law=law, dispersion=obj.get("dispersion", 1.0), **cov)
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed group entry: {exc}") from None


@dataclass(frozen=True)
class SimSpec:
    groups: tuple
    family: Family
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise SpecError("at least one group is required")
        if len({g.d for g in self.groups}) != 1:
            raise SpecError("groups disagree on the covariate dimension")

    @property
    def G(self) -> int:
        return len(self.groups)

    @property
    def d(self) -> int:
        return self.groups[0].d

    @property
    def n(self) -> int:
        return sum(g.n for g in self.groups)

    def with_seed(self, seed: int) -> SimSpec:
        return SimSpec(self.groups, self.family, seed, self.name)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "family": self.family.kind,
            "trials": self.family.trials,
            "seed": int(self.seed),
            "groups": [g.to_dict() for g in self.groups],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> SimSpec:
        if not isinstance(obj, dict):
            raise SpecError("spec must be a JSON object")
        if obj.get("schema") != SCHEMA_VERSION:
            raise SpecError(f"unsupported spec schema {obj.get('schema')!r}")
        try:
            kind = obj["family"]
            if kind == "bernoulli":
                family = Family.bernoulli()
            else:
                family = Family(kind, obj.get("trials"))
            groups = [GroupSpec.from_dict(g) for g in obj["groups"]]
            seed = obj.get("seed", 0)
            if int(seed) != seed:
                raise SpecError("seed must be an integer")
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed spec: {exc}") from None
        except ValueError as exc:
            raise SpecError(str(exc)) from None
        return cls(groups, family, int(seed), obj.get("name", ""))

    @classmethod
    def load(cls, path) -> SimSpec:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(obj)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _sample_binomial(rng: np.random.Generator, trials: int, p: np.ndarray) -> np.ndarray:
    if trials > BINOMIAL_INVERSION_MAX:
        return rng.binomial(trials, p)
    u = rng.random(p.shape[0])
    cdf = binom.cdf(np.arange(trials + 1)[None, :], trials, p[:, None])
    return np.sum(u[:, None] > cdf, axis=1)


def _sample_group(group: GroupSpec, family: Family, rng: np.random.Generator):
    if group.law == "gaussian":
        X = rng.multivariate_normal(np.array(group.mean), np.array(group.cov), size=group.n, method="cholesky")
    else:
        X = rng.uniform(np.array(group.low), np.array(group.high), size=(group.n, group.d))
    eta = canonical_eta(X, group.glm)
    mean = _mean_from_eta(eta, family)
    if family.kind == "poisson":
        y = rng.poisson(mean)
    elif family.kind == "binomial":
        y = _sample_binomial(rng, family.trials, mean / family.trials)
    else:
        y = rng.normal(mean, np.sqrt(group.dispersion))
    return X, y.astype(float)


def generate(spec: SimSpec) -> Dataset:
    """Draw a labelled dataset with exactly ``n`` rows per group, in group order."""
    streams = np.random.SeedSequence(spec.seed).spawn(spec.G)
    Xs, ys, labels = [], [], []
    for g, (group, ss) in enumerate(zip(spec.groups, streams)):
        X, y = _sample_group(group, spec.family, np.random.default_rng(ss))
        Xs.append(X)
        ys.append(y)
        labels.append(np.full(group.n, g))
    return Dataset(np.vstack(Xs), np.concatenate(ys), np.concatenate(labels), spec.family.trials)


@dataclass(frozen=True)
class Recipe:
    """A named model to fit in a replication study: ``cwm``, ``fmr`` or ``fmrc``."""

    name: str
    model: str = "cwm"
    constraint: Constraint = Constraint.NONE

    def fit(self, data: Dataset, G: int, family: Family, config: FitConfig):
        if self.model == "cwm":
            return fit(data, G, family, self.constraint, config)
        if self.model == "fmr":
            return fit_fmr(data, G, family, config)
        if self.model == "fmrc":
            return fit_fmrc(data, G, family, config)
        raise ValueError(f"unknown model {self.model!r}")


RECIPES = {
    "cwm": Recipe("cwm"),
    "cwm-common-gaussian": Recipe("cwm-common-gaussian", "cwm", Constraint.COMMON_GAUSSIAN),
    "cwm-common-sigma": Recipe("cwm-common-sigma", "cwm", Constraint.COMMON_SIGMA_EQUAL_WEIGHTS),
    "fmr": Recipe("fmr", "fmr"),
    "fmrc": Recipe("fmrc", "fmrc"),
}


@dataclass
class ReplicationSummary:
    n_reps: int
    per_recipe: dict = field(default_factory=dict)
    discrepancy: dict = field(default_factory=dict)
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"n_reps": self.n_reps, "per_recipe": self.per_recipe, "discrepancy": self.discrepancy}


def _mean_sd(values) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"mean": None, "sd": None}
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0}


def replication_study(
    spec: SimSpec,
    n_reps: int,
    recipes,
    G: int | None = None,
    config: FitConfig | None = None,
) -> ReplicationSummary:
    """Fit every recipe to ``n_reps`` fresh datasets drawn from ``spec``.

    Within one replication all recipes share the fitting seed, hence the
    same initial partitions.  Coefficient discrepancy is reported between
    the first recipe and each of the others.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    recipes = [RECIPES[r] if isinstance(r, str) else r for r in recipes]
    G = G or spec.G
    base = config or FitConfig()
    children = np.random.SeedSequence(spec.seed).spawn(n_reps)
    stats = {r.name: {"ari": [], "misclassification": [], "bic": [], "failures": 0} for r in recipes}
    disc = {r.name: [] for r in recipes[1:]}
    traces = []
    for child in children:
        data_seed, fit_seed = (int(s) for s in child.generate_state(2))
        data = generate(spec.with_seed(data_seed))
        config = FitConfig(**{**base.__dict__, "rng_seed": fit_seed})
        fitted = {}
        for r in recipes:
            try:
                res = r.fit(data, G, spec.family, config)
            except Exception:  # noqa: BLE001 - a failed replication is counted, not fatal
                stats[r.name]["failures"] += 1
                continue
            fitted[r.name] = res
            traces.extend(res.all_traces)
            stats[r.name]["ari"].append(adjusted_rand_index(data.labels, res.labels))
            stats[r.name]["misclassification"].append(misclassification_error(data.labels, res.labels))
            stats[r.name]["bic"].append(res.bic)
        first = recipes[0].name
        for r in recipes[1:]:
            if first in fitted and r.name in fitted:
                disc[r.name].append(coefficient_discrepancy(fitted[first].model.glms, fitted[r.name].model.glms))
    summary = ReplicationSummary(n_reps, traces=traces)
    for name, s in stats.items():
        summary.per_recipe[name] = {
            "ari": _mean_sd(s["ari"]),
            "misclassification": _mean_sd(s["misclassification"]),
            "bic": _mean_sd(s["bic"]),
            "failures": s["failures"],
        }
    for name, values in disc.items():
        summary.discrepancy[f"{recipes[0].name}~{name}"] = {**_mean_sd(values), "values": values}
    return summary


# Simulation designs used in the numerical studies.  Tabulated spreads are variances.

def example1_spec(law: str = "normal", seed: int = 1) -> SimSpec:
    """Two Poisson regressions sharing one covariate law (no covariate group structure)."""
    if law == "normal":
        cov = {"law": "gaussian", "mean": (5.0,), "cov": ((0.8,),)}
    elif law == "unif-4.4-5.5":
        cov = {"law": "uniform", "low": (4.4,), "high": (5.5,)}
    elif law == "unif-4-5":
        cov = {"law": "uniform", "low": (4.0,), "high": (5.0,)}
    else:
        raise ValueError(f"unknown covariate law {law!r}")
    groups = [GroupSpec(250, (1.0, 0.2), **cov), GroupSpec(350, (0.0, 0.6), **cov)]
    return SimSpec(groups, Family.poisson(), seed, f"example1-{law}")


def example2_spec(seed: int = 2) -> SimSpec:
    groups = [
        GroupSpec(250, (0.0, 1.0), mean=(2.0,), cov=((1.0,),)),
        GroupSpec(350, (0.0, 1.0), mean=(-2.0,), cov=((1.0,),)),
    ]
    return SimSpec(groups, Family.binomial(30), seed, "example2")


def example3_spec(seed: int = 3) -> SimSpec:
    groups = [
        GroupSpec(100, (0.0, 2.0), mean=(0.0,), cov=((1.0,),)),
        GroupSpec(150, (0.0, 0.5), mean=(0.0,), cov=((16.0,),)),
    ]
    return SimSpec(groups, Family.binomial(30), seed, "example3")


def example4_spec(seed: int = 4) -> SimSpec:
    groups = [
        GroupSpec(150, (1.0, 0.2), mean=(0.0,), cov=((1.5,),)),
        GroupSpec(250, (0.0, 0.5), mean=(5.0,), cov=((0.8,),)),
    ]
    return SimSpec(groups, Family.poisson(), seed, "example4")


def disjoint_support_spec(seed: int = 7) -> SimSpec:
    """Two groups on disjoint covariate ranges sharing one Poisson regression."""
    groups = [
        GroupSpec(164, (1.0, 0.02), law="uniform", low=(20.0,), high=(45.0,)),
        GroupSpec(168, (1.0, 0.02), law="uniform", low=(60.0,), high=(85.0,)),
    ]
    return SimSpec(groups, Family.poisson(), seed, "disjoint-support")


DESIGNS = {
    "example1-normal": lambda seed: example1_spec("normal", seed),
    "example1-unif-4.4-5.5": lambda seed: example1_spec("unif-4.4-5.5", seed),
    "example1-unif-4-5": lambda seed: example1_spec("unif-4-5", seed),
    "example2": example2_spec,
    "example3": example3_spec,
    "example4": example4_spec,
    "disjoint-support": disjoint_support_spec,
}
