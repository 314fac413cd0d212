"""JSON model files (``"schema": 1``).

Floats are written with Python's shortest round-trip repr, so loading a
saved model reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .em import Constraint, CwmModel, FitResult, free_param_count
from .exp_family import Family, GlmComponent
from .gaussian import GaussianComponent
from .mixtures import ConcomitantParams, FmrcModel, FmrModel, fmr_param_count, fmrc_param_count

SCHEMA_VERSION = 1


class ModelFileError(ValueError):
    pass


def model_kind(model) -> str:
    if isinstance(model, CwmModel):
        return "cwm"
    if isinstance(model, FmrModel):
        return "fmr"
    if isinstance(model, FmrcModel):
        return "fmrc"
    raise TypeError(f"not a model: {type(model).__name__}")


def param_count(model) -> int:
    kind = model_kind(model)
    if kind == "cwm":
        return free_param_count(model.G, model.d, model.family, model.constraint)
    if kind == "fmr":
        return fmr_param_count(model.G, model.d, model.family)
    return fmrc_param_count(model.G, model.d, model.family)


def _glm_dict(c: GlmComponent) -> dict:
    return {"beta": c.beta.tolist(), "dispersion": c.dispersion}


def model_to_dict(model, fit: FitResult | None = None) -> dict:
    kind = model_kind(model)
    out = {
        "schema": SCHEMA_VERSION,
        "model": kind,
        "family": {"kind": model.family.kind, "trials": model.family.trials},
        "constraint": model.constraint.value if kind == "cwm" else None,
        "G": model.G,
        "d": model.d,
    }
    comps = [_glm_dict(c) for c in model.glms]
    if kind == "cwm":
        out["weights"] = model.weights.tolist()
        for comp, gauss in zip(comps, model.gaussians):
            comp["mean"] = gauss.mean.tolist()
            comp["covariance"] = gauss.covariance.ravel().tolist()
    elif kind == "fmr":
        out["weights"] = model.weights.tolist()
    else:
        out["alpha0"] = model.concomitant.alpha0.tolist()
        out["alpha1"] = model.concomitant.alpha1.tolist()
    out["components"] = comps
    if fit is not None:
        out["fit"] = {
            "loglik": fit.loglik,
            "bic": fit.bic,
            "n_params": fit.n_params,
            "n_iter": fit.n_iter,
            "converged": bool(fit.converged),
            "seed": int(fit.seed),
        }
    return out


def model_from_dict(obj: dict):
    if not isinstance(obj, dict) or obj.get("schema") != SCHEMA_VERSION:
        raise ModelFileError("not a schema-1 model file")
    try:
        fam = obj["family"]
        family = Family(fam["kind"], fam.get("trials"))
        d = int(obj["d"])
        glms = [GlmComponent.from_beta(c["beta"], c["dispersion"]) for c in obj["components"]]
        kind = obj["model"]
        if kind == "cwm":
            gaussians = [
                GaussianComponent.from_moments(c["mean"], np.reshape(c["covariance"], (d, d)))
                for c in obj["components"]
            ]
            return CwmModel(obj["weights"], gaussians, glms, family, Constraint(obj["constraint"]))
        if kind == "fmr":
            return FmrModel(obj["weights"], glms, family)
        if kind == "fmrc":
            return FmrcModel(ConcomitantParams(obj["alpha0"], obj["alpha1"]), glms, family)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from None
    raise ModelFileError(f"unknown model kind {obj.get('model')!r}")


def save_model(path, model, fit: FitResult | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, fit), indent=2) + "\n", encoding="utf-8")


def load_model(path):
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(obj), obj.get("fit")
