"""Covariance models for centered Gaussian vectors, and sampling from them.

A :class:`CovModel` wraps a strictly positive definite covariance matrix.
Constructors are provided for the two structured families used throughout
the package (one-factor and equicorrelation) as well as explicit matrices.
"""

from __future__ import annotations

import numpy as np

from ._rng import stream


class NotPositiveDefiniteError(ValueError):
    """Covariance matrix is not strictly positive definite."""


class CovModel:
    """Strictly positive definite covariance matrix of a centered Gaussian.

    The matrix is stored via its upper triangle and mirrored, so it is
    exactly symmetric.  Construction fails unless the Cholesky
    factorization succeeds with strictly positive pivots.

    Instances are immutable and safe to share across threads; the
    internal moment cache only ever stores values that concurrent
    computations would reproduce identically.
    """

    def __init__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ValueError(f"covariance matrix must be square, got shape {theta.shape}")
        p = theta.shape[0]
        if p < 2:
            raise ValueError(f"dimension must be at least 2, got {p}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("covariance matrix has non-finite entries")
        scale = max(1.0, float(np.abs(theta).max()))
        if np.abs(theta - theta.T).max() > 1e-12 * scale:
            raise ValueError("covariance matrix is not symmetric")
        upper = np.triu(theta)
        theta = upper + np.triu(upper, 1).T
        try:
            chol = np.linalg.cholesky(theta)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "covariance matrix is not strictly positive definite"
            ) from exc
        if np.min(np.diag(chol)) <= 0.0:
            raise NotPositiveDefiniteError("Cholesky pivot is not strictly positive")
        theta.setflags(write=False)
        self.p = p
        self.theta = theta
        self._chol = chol
        self._moment_cache: dict = {}

    @property
    def min_cholesky_pivot(self) -> float:
        return float(np.min(np.diag(self._chol)))

    def entry(self, u: int, v: int) -> float:
        """Covariance of coordinates ``u`` and ``v`` (1-based)."""
        return float(self.theta[u - 1, v - 1])

    def __repr__(self) -> str:
        return f"CovModel(p={self.p})"

    def __getstate__(self):
        return {"theta": np.array(self.theta)}

    def __setstate__(self, state):
        self.__init__(state["theta"])


def one_factor_cov(loadings, uniqueness_diag) -> CovModel:
    """One-factor covariance ``diag(uniqueness) + loadings loadings^T``.

    All uniqueness entries must be strictly positive, which makes the
    result strictly positive definite by construction.
    """
    loadings = np.asarray(loadings, dtype=float)
    uniqueness = np.asarray(uniqueness_diag, dtype=float)
    if loadings.ndim != 1 or uniqueness.ndim != 1 or loadings.shape != uniqueness.shape:
        raise ValueError("loadings and uniqueness must be vectors of equal length")
    if np.any(uniqueness <= 0.0):
        raise ValueError("uniqueness entries must be strictly positive")
    theta = np.diag(uniqueness) + np.outer(loadings, loadings)
    return CovModel(theta)


def equicorrelation_cov(p: int, rho: float) -> CovModel:
    """Covariance with unit diagonal and constant off-diagonal ``rho``.

    Admits ``rho = 0`` (identity) and requires ``0 <= rho < 1``.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    theta = np.full((p, p), rho)
    np.fill_diagonal(theta, 1.0)
    return CovModel(theta)


def sample_gaussian(model: CovModel, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from ``N_p(0, theta)``.

    Rows are the Cholesky factor applied to standard normal vectors.
    Deterministic given ``seed`` (an integer or a derived SeedSequence).
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = stream(seed, "gaussian-sample")
    z = rng.standard_normal((n, model.p))
    return z @ model._chol.T


def sample_covariance(X: np.ndarray) -> np.ndarray:
    """Second-moment matrix ``n^{-1} sum_i X_i X_i^T`` (no mean centering).

    The data model is centered, so the plain average of outer products is
    the natural covariance estimate; the result is symmetric but need not
    be positive definite.
    """
    X = as_sample_matrix(X)
    n = X.shape[0]
    theta_hat = X.T @ X / n
    return (theta_hat + theta_hat.T) / 2.0


def as_sample_matrix(X, min_rows: int = 1) -> np.ndarray:
    """Validate an (n, p) sample matrix: 2-d, float, finite, n >= min_rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"sample matrix must be 2-dimensional, got ndim={X.ndim}")
    if X.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("sample matrix has non-finite entries")
    return X
