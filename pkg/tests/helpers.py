"""Shared helpers for the test suite."""

import numpy as np

from covconstraint.constraints import PolyConstraint, upper_pairs
from covconstraint.models import CovModel


def random_pd_model(rng, p: int) -> CovModel:
    """Well-conditioned random strictly PD covariance."""
    a = rng.normal(size=(p, p))
    theta = a @ a.T / p + 0.5 * np.eye(p)
    return CovModel(theta)


def random_constraint(rng, p: int, degree: int) -> PolyConstraint:
    """Random polynomial with a guaranteed top-degree monomial."""
    pairs = upper_pairs(p)
    monomials = []
    for _ in range(int(rng.integers(2, 5))):
        size = int(rng.integers(1, degree + 1))
        monomials.append(
            (float(rng.normal()), [pairs[i] for i in rng.integers(0, len(pairs), size)])
        )
    monomials.append(
        (float(rng.normal()), [pairs[i] for i in rng.integers(0, len(pairs), degree)])
    )
    return PolyConstraint(p, float(rng.normal()), monomials)


def finite_difference_gradient(f: PolyConstraint, theta: np.ndarray, step: float = 1e-6):
    """Central finite differences of `evaluate` over upper-diagonal pairs,
    perturbing theta[u,v] and theta[v,u] together (symmetric domain)."""
    grad = []
    for (u, v) in upper_pairs(f.p):
        plus = np.array(theta)
        minus = np.array(theta)
        plus[u - 1, v - 1] += step
        minus[u - 1, v - 1] -= step
        if u != v:
            plus[v - 1, u - 1] += step
            minus[v - 1, u - 1] -= step
        grad.append((f.evaluate(plus) - f.evaluate(minus)) / (2 * step))
    return np.array(grad)
