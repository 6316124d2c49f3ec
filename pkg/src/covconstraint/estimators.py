"""Scikit-learn style front end for the constraint tests.

Each test is an estimator: hyperparameters at construction (stored
untouched so ``get_params`` / ``clone`` round-trip), and ``fit(X)``
consumes an (n, p) sample matrix and exposes the outcome through
trailing-underscore attributes (``zscore_``, ``pvalue_``, ...).  This
lets the tests participate in the wider estimator ecosystem (cloning,
parameter grids, pipelines ending in a test).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from . import ustats
from .constraints import PolyConstraint, parse_constraint
from .models import CovModel


def _as_constraint(constraint) -> PolyConstraint:
    if isinstance(constraint, PolyConstraint):
        return constraint
    if isinstance(constraint, str):
        return parse_constraint(constraint)
    raise TypeError("constraint must be a PolyConstraint or constraint text")


def _as_model(theta) -> CovModel:
    if isinstance(theta, CovModel):
        return theta
    return CovModel(np.asarray(theta, dtype=float))


class BaseConstraintTest(BaseEstimator):
    """Shared fit/validation plumbing for the concrete tests."""

    def _validate(self, X, constraint: PolyConstraint) -> np.ndarray:
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != constraint.p:
            raise ValueError(
                f"X has {X.shape[1]} columns but the constraint lives in "
                f"dimension {constraint.p}"
            )
        self.n_features_in_ = X.shape[1]
        self.n_samples_ = X.shape[0]
        return X

    def _record(self, outcome: ustats.TestOutcome):
        self.outcome_ = outcome
        self.statistic_ = outcome.statistic
        self.normalizer_ = outcome.normalizer
        self.zscore_ = outcome.zscore
        self.pvalue_ = outcome.pvalue
        self.nhat_ = outcome.nhat
        return self

    def _check_fitted(self):
        if not hasattr(self, "outcome_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit(X)")

    def reject(self, alpha: float = 0.05, sided: str = "two") -> bool:
        """Rejection decision at nominal level alpha from the fitted z-score."""
        self._check_fitted()
        from scipy import stats

        if sided == "two":
            return bool(abs(self.zscore_) > stats.norm.ppf(1.0 - alpha / 2.0))
        if sided == "right":
            return bool(self.zscore_ > stats.norm.ppf(1.0 - alpha))
        raise ValueError(f"sided must be 'two' or 'right', got {sided!r}")


class WaldConstraintTest(BaseConstraintTest):
    """Wald test of ``f(theta) = 0`` from the sample covariance.

    With ``theta`` given, the statistic is normalized by the true
    limiting variance (the hypothesis must be regular there); with
    ``theta=None`` the normalizer is the sample-covariance plug-in.

    Attributes after ``fit``: ``statistic_``, ``normalizer_``,
    ``zscore_``, ``pvalue_``, ``outcome_``.
    """

    def __init__(self, constraint, theta=None):
        self.constraint = constraint
        self.theta = theta

    def fit(self, X, y=None):
        f = _as_constraint(self.constraint)
        X = self._validate(X, f)
        if self.theta is None:
            outcome = ustats.wald_studentized(f, X)
        else:
            outcome = ustats.wald_standardized(f, _as_model(self.theta), X)
        return self._record(outcome)


class IncompleteUTest(BaseConstraintTest):
    """Bernoulli-sampled incomplete U-statistic test of ``f(theta) = 0``.

    ``budget`` is the expected number of kernel evaluations, absolute or
    as an ``'xK'`` multiple of the sample size.  With ``theta`` given the
    normalizer is the exact limiting variance; otherwise it is estimated
    from the data (kernel sample variance plus the split-sample
    projection variance).  Deterministic given ``seed``.

    Attributes after ``fit``: ``statistic_``, ``normalizer_``,
    ``zscore_``, ``pvalue_``, ``nhat_``, ``outcome_``.
    """

    def __init__(self, constraint, budget="x2", theta=None, seed=0,
                 split_count="auto"):
        self.constraint = constraint
        self.budget = budget
        self.theta = theta
        self.seed = seed
        self.split_count = split_count

    def fit(self, X, y=None):
        f = _as_constraint(self.constraint)
        X = self._validate(X, f)
        n = X.shape[0]
        plan = ustats.BudgetPlan(
            n=n, m=f.degree,
            budget=ustats.resolve_budget(self.budget, n),
            seed=self.seed,
        )
        if self.theta is None:
            outcome = ustats.icu_studentized(f, X, plan, split_count=self.split_count)
        else:
            outcome = ustats.icu_standardized(f, _as_model(self.theta), X, plan)
        return self._record(outcome)


class BlockTest(BaseConstraintTest):
    """Disjoint-batch kernel average standardized by the exact kernel sd.

    Requires the true ``theta``; its normal approximation is insensitive
    to the singularity status of the hypothesis.
    """

    def __init__(self, constraint, theta):
        self.constraint = constraint
        self.theta = theta

    def fit(self, X, y=None):
        f = _as_constraint(self.constraint)
        X = self._validate(X, f)
        outcome = ustats.block_standardized(f, _as_model(self.theta), X)
        return self._record(outcome)
