"""Exact variance components of constraint kernels, and normal-approximation
diagnostics built from them.

``sigma_g_sq`` is the variance of the one-argument projection kernel and
``sigma_h_sq`` the variance of the full symmetrized kernel; their ratio
drives how fast the complete U-statistic approaches normality.  Both are
computed exactly from Isserlis moments, with the projection variance
additionally available through the Wishart-covariance quadratic form
``grad f' V grad f / m^2`` as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import derive
from .constraints import PolyConstraint, upper_pairs
from .kernels import (
    KernelConsistencyError,
    kernel_mean,
    kernel_second_moment,
    projection_kernel,
    symmetric_kernel,
)
from .models import CovModel, sample_gaussian
from .wick import isserlis_moment

DUAL_PATH_RTOL = 1e-10


def wishart_cov_matrix(theta) -> np.ndarray:
    """Covariance of the upper-diagonal entries of ``X X^T``.

    Entry ((u,v), (w,z)) equals ``theta[u,w] theta[v,z] + theta[u,z]
    theta[v,w]``; rows/columns follow :func:`upper_pairs` order.  Accepts
    any symmetric matrix (used both for a true covariance and for the
    sample plug-in).
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    pairs = upper_pairs(p)
    ui = np.array([u - 1 for u, _ in pairs])
    vi = np.array([v - 1 for _, v in pairs])
    return (
        theta[np.ix_(ui, ui)] * theta[np.ix_(vi, vi)]
        + theta[np.ix_(ui, vi)] * theta[np.ix_(vi, ui)]
    )


def wishart_cov(model: CovModel) -> np.ndarray:
    """`wishart_cov_matrix` of a strictly PD model (itself strictly PD)."""
    return wishart_cov_matrix(model.theta)


def sigma_g_sq(f: PolyConstraint, theta: CovModel, verify: bool = False) -> float:
    """Variance of the projection kernel, ``grad f' V grad f / m^2``.

    With ``verify=True`` the same variance is recomputed exactly through
    the Isserlis route (second moment of the symbolic projection kernel)
    and the two paths must agree to relative 1e-10, else a
    :class:`KernelConsistencyError` signals a kernel-construction bug.
    """
    grad = f.gradient(theta.theta)
    quad = float(grad @ wishart_cov(theta) @ grad) / f.degree**2
    if verify:
        exact = sigma_g_sq_isserlis(f, theta)
        scale = max(abs(quad), abs(exact), 1e-12)
        if abs(quad - exact) > DUAL_PATH_RTOL * scale:
            raise KernelConsistencyError(
                f"projection-variance paths disagree: quadratic form {quad!r} "
                f"vs Isserlis {exact!r}"
            )
    return quad


def sigma_g_sq_isserlis(f: PolyConstraint, theta: CovModel) -> float:
    """Projection-kernel variance via its exact first two moments."""
    g = projection_kernel(f, theta)
    mean = kernel_mean(g, theta)
    return kernel_second_moment(g, theta) - mean**2


def sigma_h_sq(f: PolyConstraint, theta: CovModel) -> float:
    """Exact variance of the symmetrized kernel.

    Strictly positive for every non-constant constraint at a strictly PD
    model: a non-constant polynomial in a non-degenerate Gaussian vector
    cannot be almost-surely constant.
    """
    h = symmetric_kernel(f)
    mean = kernel_mean(h, theta)
    return kernel_second_moment(h, theta) - mean**2


@dataclass(frozen=True)
class BEDiagnostics:
    """Computable ingredients of the complete-U-statistic Berry-Esseen bound.

    ``bound_term1 = (1 + sqrt(2)) (m-1) sigma_h / (sqrt(m (n-m+1)) sigma_g)``
    is exact; ``bound_term2 = 6.1 E|g|^3 / (sqrt(n) sigma_g^3)`` uses a
    Monte Carlo estimate of the absolute third moment (``g_abs3``), which
    is not a polynomial functional.  At a singular model (``sigma_g = 0``)
    the ratio and both terms are reported as ``inf``.
    """

    n: int
    m: int
    sigma_g: float
    sigma_h: float
    ratio: float
    bound_term1: float
    bound_term2: float
    g_abs3: float
    g_abs3_se: float
    g_abs3_draws: int
    singular: bool


def be_diagnostics(f: PolyConstraint, theta: CovModel, n: int,
                   mc_draws: int = 200_000, seed: int = 0) -> BEDiagnostics:
    """Berry-Esseen diagnostic record for the complete U-statistic at size n."""
    m = f.degree
    if n < m:
        raise ValueError(f"need n >= degree ({m}), got n={n}")
    sg = float(np.sqrt(sigma_g_sq(f, theta)))
    sh = float(np.sqrt(sigma_h_sq(f, theta)))
    g = projection_kernel(f, theta)
    X = sample_gaussian(theta, mc_draws, derive(seed, "g-abs3"))
    gvals = g.evaluate_rows(X, np.arange(mc_draws))
    abs3 = np.abs(gvals) ** 3
    g_abs3 = float(abs3.mean())
    g_abs3_se = float(abs3.std(ddof=1) / np.sqrt(mc_draws))
    singular = sg == 0.0
    if singular:
        ratio = term1 = term2 = float("inf")
    else:
        ratio = sh / sg
        term1 = (1.0 + np.sqrt(2.0)) * (m - 1) * sh / (np.sqrt(m * (n - m + 1)) * sg)
        term2 = 6.1 * g_abs3 / (np.sqrt(n) * sg**3)
    return BEDiagnostics(
        n=n, m=m, sigma_g=sg, sigma_h=sh, ratio=ratio,
        bound_term1=float(term1), bound_term2=float(term2),
        g_abs3=g_abs3, g_abs3_se=g_abs3_se, g_abs3_draws=mc_draws,
        singular=singular,
    )


def covariance_of_products(model: CovModel, pair_a, pair_b) -> float:
    """Exact ``cov(X_u X_v, X_w X_z)`` from Isserlis moments.

    Independent cross-check of the Wishart-covariance structure formula.
    """
    (u, v), (w, z) = pair_a, pair_b
    return isserlis_moment(model, (u, v, w, z)) - model.entry(u, v) * model.entry(w, z)
