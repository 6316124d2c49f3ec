"""covconstraint: tests of polynomial equality constraints on Gaussian
covariance matrices via complete and incomplete U-statistics, with exact
Isserlis-moment computations behind the normalizers."""

__version__ = "0.1.0"

from .constraints import PolyConstraint, parse_constraint, tetrad, upper_pairs
from .estimators import BlockTest, IncompleteUTest, WaldConstraintTest
from .experiments import (
    SizeCurve,
    SizeExperimentConfig,
    default_levels,
    ks_normality,
    run_diagnostics,
    run_size_experiment,
)
from .kernels import (
    MixedKernel,
    eval_kernel,
    eval_kernel_rows,
    hoeffding_projection,
    kernel_mean,
    kernel_second_moment,
    partial_expectation,
    projection_kernel,
    symmetric_kernel,
    unbiased_kernel,
)
from .models import (
    CovModel,
    NotPositiveDefiniteError,
    equicorrelation_cov,
    one_factor_cov,
    sample_covariance,
    sample_gaussian,
)
from .moments import be_diagnostics, sigma_g_sq, sigma_h_sq, wishart_cov
from .ustats import (
    BudgetPlan,
    TestOutcome,
    block_estimator,
    complete_ustat,
    icu_standardized,
    icu_studentized,
    incomplete_ustat,
    projection_ustat,
    wald_standardized,
    wald_studentized,
    wn_bn_decompose,
)
from .wick import isserlis_moment

__all__ = [
    "BlockTest",
    "BudgetPlan",
    "CovModel",
    "IncompleteUTest",
    "MixedKernel",
    "NotPositiveDefiniteError",
    "PolyConstraint",
    "TestOutcome",
    "WaldConstraintTest",
    "be_diagnostics",
    "block_estimator",
    "complete_ustat",
    "equicorrelation_cov",
    "eval_kernel",
    "eval_kernel_rows",
    "hoeffding_projection",
    "icu_standardized",
    "icu_studentized",
    "incomplete_ustat",
    "isserlis_moment",
    "kernel_mean",
    "kernel_second_moment",
    "one_factor_cov",
    "parse_constraint",
    "partial_expectation",
    "projection_kernel",
    "projection_ustat",
    "SizeCurve",
    "SizeExperimentConfig",
    "default_levels",
    "ks_normality",
    "run_diagnostics",
    "run_size_experiment",
    "sample_covariance",
    "sample_gaussian",
    "sigma_g_sq",
    "sigma_h_sq",
    "symmetric_kernel",
    "tetrad",
    "unbiased_kernel",
    "upper_pairs",
    "wald_standardized",
    "wald_studentized",
    "wishart_cov",
    "wn_bn_decompose",
]
