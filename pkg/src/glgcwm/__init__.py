"""Generalized linear Gaussian cluster-weighted models and finite mixtures of GLMs."""

from .data import Dataset, read_csv, write_csv
from .em import (
    AllRestartsFailed,
    Constraint,
    CwmModel,
    FitConfig,
    FitResult,
    InitStrategy,
    e_step,
    fit,
    free_param_count,
    hard_labels,
    joint_logdensity,
    m_step,
)
from .exp_family import Family, GlmComponent, conditional_logdensity, conditional_mean_var, irls_weighted_fit
from .gaussian import DegenerateComponent, GaussianComponent, mvn_logpdf, weighted_mean_cov
from .mixtures import (
    ConcomitantParams,
    FmrcModel,
    FmrModel,
    concomitant_weights,
    cwm_to_fmrc_alphas,
    fit_fmr,
    fit_fmrc,
)

__version__ = "0.1.0"
