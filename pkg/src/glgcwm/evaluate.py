"""Evaluate a fitted model on a dataset."""

from __future__ import annotations

import warnings

import numpy as np

from .data import DataError, Dataset
from .em import e_step, hard_labels
from .metrics import (
    EvalReport,
    adjusted_rand_index,
    bic,
    cgof_details,
    generalized_deviance,
    misclassification_error,
    rand_index,
)
from .mixtures import fmr_posterior, fmrc_posterior
from .modelfile import model_kind, param_count


def posterior(model, data: Dataset) -> tuple[np.ndarray, float]:
    """Responsibilities and observed log-likelihood for any model kind.

    For FMR/FMRC models the log-likelihood is that of y given x.
    """
    if data.d != model.d:
        raise DataError(f"data has {data.d} covariates but the model expects {model.d}")
    data.check_family(model.family)
    kind = model_kind(model)
    if kind == "cwm":
        return e_step(model, data)
    if kind == "fmr":
        return fmr_posterior(model, data)
    return fmrc_posterior(model, data)


def evaluate(model, data: Dataset, labels=None) -> EvalReport:
    tau, loglik = posterior(model, data)
    z = hard_labels(tau)
    report = EvalReport(bic=bic(loglik, param_count(model), data.n), loglik=loglik)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report.cgof, report.cgof_skipped = cgof_details(data.X, data.y, z, model.glms, model.family)
        if model.family.kind != "gaussian":
            report.gd, report.gsd = generalized_deviance(data.X, data.y, z, model.glms, model.family)
    if labels is not None:
        report.misclassification = misclassification_error(labels, z)
        report.rand = rand_index(labels, z)
        report.ari = adjusted_rand_index(labels, z)
    return report
