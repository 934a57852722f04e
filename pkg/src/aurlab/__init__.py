"""Robust regression over averaged and worst-case uncertainty.

Averaging the squared loss over a uniform perturbation set reduces to ridge
regression with a set-specific penalty; the worst case over the same kind of
set gives an unsquared-norm objective.  This package provides the sets, exact
and Markov-chain samplers over them, both regression solvers, a Monte Carlo
audit of the closed-form penalties, and an experiment harness.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (AurlabError, ConfigError, DataError, DimensionError, FormulaInvalidError,
                     RankDeficientError, SamplingError)
from .geometry import (PenaltyMode, SetKind, UncertaintySet, closed_form_moments, contains, contains_many,
                       log_volume, per_entry_second_moment, ridge_lambda, volume)
from .sampling import (PerturbationBatch, SamplerConfig, SamplingMethod, direct_sample, hit_and_run,
                       nested_level_sample, rejection_sample)
from .regression import (CvSpec, FitResult, Method, RegressionProblem, fit_aur, fit_ols, fit_wur,
                         select_lambda_cv)
from .audit import Verdict, audit_moments, verify_equivalence

__all__ = [
    "BACKEND", "AurlabError", "ConfigError", "DataError", "DimensionError", "FormulaInvalidError",
    "RankDeficientError", "SamplingError", "PenaltyMode", "SetKind", "UncertaintySet",
    "closed_form_moments", "contains", "contains_many", "log_volume", "per_entry_second_moment",
    "ridge_lambda", "volume", "PerturbationBatch", "SamplerConfig", "SamplingMethod", "direct_sample",
    "hit_and_run", "nested_level_sample", "rejection_sample", "CvSpec", "FitResult", "Method",
    "RegressionProblem", "fit_aur", "fit_ols", "fit_wur", "select_lambda_cv", "Verdict",
    "audit_moments", "verify_equivalence",
]
