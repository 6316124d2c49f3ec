"""Exact-identity self checks, runnable from the CLI.

Each item verifies an algebraic identity that holds to rounding
precision whenever the kernel machinery is correct: agreement of the two
projection-variance paths, the Hoeffding decomposition, the
incomplete-statistic reconstruction, complete degeneracy of the
projections, and the Isserlis base cases.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from ._rng import derive
from .constraints import PolyConstraint, tetrad, upper_pairs
from .kernels import (
    MixedKernel,
    canonical_defect,
    hoeffding_projection,
    kernel_mean,
    kernel_second_moment,
    projection_kernel,
)
from .models import equicorrelation_cov, sample_gaussian
from .moments import sigma_g_sq, wishart_cov
from .ustats import BudgetPlan, complete_ustat, incomplete_ustat, projection_ustat, wn_bn_decompose
from .wick import isserlis_moment


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_constraint(rng, p: int, degree: int) -> PolyConstraint:
    """Random polynomial for identity checks: a few monomials of the
    given maximal degree with unit-scale coefficients."""
    pairs = upper_pairs(p)
    monomials = []
    for _ in range(rng.integers(2, 5)):
        size = int(rng.integers(1, degree + 1))
        chosen = [pairs[i] for i in rng.integers(0, len(pairs), size=size)]
        monomials.append((float(rng.normal()), chosen))
    size_top = degree
    chosen = [pairs[i] for i in rng.integers(0, len(pairs), size=size_top)]
    monomials.append((float(rng.normal()), chosen))
    return PolyConstraint(p, float(rng.normal()), monomials)


def run_selfcheck(perturb_kernel: bool = False) -> list[CheckResult]:
    """Run every identity check; ``perturb_kernel`` injects a relative
    1e-6 error into one projection-kernel coefficient so the dual-path
    variance check must fail (a sanity check of the checker itself)."""
    results = []
    rng = np.random.default_rng(20240613)

    model = equicorrelation_cov(4, 0.2)
    f = tetrad(1, 2, 3, 4)

    # Isserlis base cases
    ident = equicorrelation_cov(4, 0.0)
    base_ok = (
        isserlis_moment(ident, (1, 2, 3)) == 0.0
        and isserlis_moment(model, (1, 2)) == model.entry(1, 2)
        and isserlis_moment(ident, (1, 1, 2, 2)) == 1.0
        and isserlis_moment(ident, (1, 1, 1, 1)) == 3.0
    )
    results.append(CheckResult("isserlis-base-cases", base_ok, "pair moments and odd-key zero"))

    # dual-path projection variance, with the optional perturbation hook
    worst = 0.0
    for k in range(6):
        fk = f if k == 0 else random_constraint(rng, p=4, degree=2 + k % 2)
        g = projection_kernel(fk, model)
        if perturb_kernel:
            coeff, factors = g.monomials[-1]
            entries = list(g.monomials[:-1]) + [(coeff * (1.0 + 1e-6), factors)]
            g = MixedKernel(1, g.p, entries, theta=model)
        var_isserlis = kernel_second_moment(g, model) - kernel_mean(g, model) ** 2
        grad = fk.gradient(model.theta)
        var_quad = float(grad @ wishart_cov(model) @ grad) / fk.degree**2
        scale = max(abs(var_quad), abs(var_isserlis), 1e-12)
        worst = max(worst, abs(var_quad - var_isserlis) / scale)
    results.append(CheckResult(
        "projection-variance-dual-path", worst <= 1e-10,
        f"max relative gap {worst:.3e}",
    ))

    # Hoeffding decomposition and canonical projections at n = 12
    n_small = 12
    worst_rec, worst_canon = 0.0, 0.0
    model3 = equicorrelation_cov(3, 0.3)
    for degree in (2, 3):
        fk = random_constraint(rng, p=3, degree=degree)
        X = sample_gaussian(model3, n_small, derive(4, "selfcheck", degree))
        total = fk.evaluate(model3.theta)
        for r in range(1, degree + 1):
            proj = hoeffding_projection(fk, model3, r)
            scale = max(1.0, proj.max_abs_coeff)
            worst_canon = max(worst_canon, canonical_defect(proj, model3) / scale)
            total += comb(degree, r) * projection_ustat(fk, model3, X, r)
        u_n = complete_ustat(fk, X)
        worst_rec = max(worst_rec, abs(u_n - total) / max(abs(u_n), 1.0))
    results.append(CheckResult(
        "hoeffding-decomposition", worst_rec <= 1e-10, f"max relative gap {worst_rec:.3e}"
    ))
    results.append(CheckResult(
        "canonical-projections", worst_canon <= 1e-12, f"max defect {worst_canon:.3e}"
    ))

    # incomplete-statistic identities
    model4 = equicorrelation_cov(4, 0.2)
    X = sample_gaussian(model4, 40, derive(11, "selfcheck-data"))
    plan = BudgetPlan(n=40, m=2, budget=80, seed=17)
    try:
        dec = wn_bn_decompose(f, X, plan)
        recon_ok = True
        detail = f"N_hat = {dec.nhat}"
    except Exception as exc:  # identity violation raises
        recon_ok, detail = False, repr(exc)
    results.append(CheckResult("incomplete-reconstruction", recon_ok, detail))

    full_plan = BudgetPlan(n=40, m=2, budget=comb(40, 2), seed=3)
    value, nhat = incomplete_ustat(f, X, full_plan)
    u_n = complete_ustat(f, X)
    results.append(CheckResult(
        "full-budget-equals-complete", value == u_n and nhat == comb(40, 2),
        f"U' - U = {value - u_n!r}",
    ))
    return results
