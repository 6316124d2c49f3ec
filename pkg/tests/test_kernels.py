from itertools import permutations

import numpy as np
import pytest

from covconstraint.constraints import PolyConstraint
from covconstraint.kernels import (
    MixedKernel,
    UnsupportedDegreeError,
    canonical_defect,
    eval_kernel,
    eval_kernel_rows,
    hoeffding_projection,
    integrate_slots,
    kernel_mean,
    kernel_second_moment,
    partial_expectation,
    projection_kernel,
    symmetric_kernel,
    symmetrize,
    unbiased_kernel,
)
from covconstraint.models import equicorrelation_cov, sample_gaussian
from covconstraint.moments import sigma_g_sq, wishart_cov

from helpers import random_constraint, random_pd_model


def kernels_equal(a: MixedKernel, b: MixedKernel, tol: float = 1e-12) -> bool:
    merged = {factors: coeff for coeff, factors in a.monomials}
    for coeff, factors in b.monomials:
        merged[factors] = merged.get(factors, 0.0) - coeff
    return all(abs(v) <= tol for v in merged.values())


class TestUnbiasedKernel:
    def test_tetrad_structure(self, tet):
        raw = unbiased_kernel(tet)
        assert raw.arity == 2
        assert raw.monomials == (
            (-1.0, ((1, 1, 3), (2, 2, 4))),
            (1.0, ((1, 1, 4), (2, 2, 3))),
        )

    def test_degree_one_monomial(self):
        f = PolyConstraint(2, 0.0, [(1.0, [(1, 2)])])
        raw = unbiased_kernel(f)
        assert raw.arity == 1 and raw.monomials == ((1.0, ((1, 1, 2),)),)
        x = np.array([3.0, 5.0])
        assert raw.evaluate(x) == 15.0

    def test_exact_mean_equals_constraint_value(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            p = int(rng.integers(2, 5))
            f = random_constraint(rng, p, int(rng.integers(1, 4)))
            model = random_pd_model(rng, p)
            mean = kernel_mean(unbiased_kernel(f), model)
            assert mean == pytest.approx(f.evaluate(model.theta), rel=1e-11, abs=1e-12)


class TestSymmetrizedEvaluation:
    def test_tetrad_closed_form(self, tet):
        rng = np.random.default_rng(41)
        for _ in range(10):
            x1, x2 = rng.normal(size=4), rng.normal(size=4)
            direct = 0.5 * (
                x1[0] * x1[3] * x2[1] * x2[2]
                - x1[0] * x1[2] * x2[1] * x2[3]
                + x1[1] * x1[2] * x2[0] * x2[3]
                - x1[1] * x1[3] * x2[0] * x2[2]
            )
            assert eval_kernel(tet, x1, x2) == pytest.approx(direct, rel=1e-12)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(43)
        f = random_constraint(rng, 3, 3)
        args = [rng.normal(size=3) for _ in range(3)]
        values = {eval_kernel(f, *(args[i] for i in perm)) for perm in permutations(range(3))}
        assert len(values) == 1

    def test_rows_match_scalar_evaluation(self, tet):
        rng = np.random.default_rng(47)
        X = rng.normal(size=(8, 4))
        idx = np.array([[0, 1], [2, 5], [6, 7]])
        rows = eval_kernel_rows(tet, X, idx)
        for k, (i, j) in enumerate(idx):
            assert rows[k] == pytest.approx(eval_kernel(tet, X[i], X[j]), rel=1e-14)

    def test_monte_carlo_unbiasedness(self, tet):
        model = equicorrelation_cov(4, 0.2)
        X = sample_gaussian(model, 2_000_000, seed=53)
        idx = np.arange(2_000_000).reshape(-1, 2)
        values = eval_kernel_rows(tet, X, idx)
        se = values.std(ddof=1) / np.sqrt(values.size)
        assert abs(values.mean() - tet.evaluate(model.theta)) <= 4 * se

    def test_symbolic_symmetrization_matches_eval(self):
        rng = np.random.default_rng(59)
        f = random_constraint(rng, 3, 2)
        sym = symmetric_kernel(f)
        for _ in range(5):
            x1, x2 = rng.normal(size=3), rng.normal(size=3)
            assert sym.evaluate(x1, x2) == pytest.approx(eval_kernel(f, x1, x2), rel=1e-12)

    def test_permutation_budget(self):
        f = PolyConstraint(2, 0.0, [(1.0, [(1, 2)] * 7)])
        with pytest.raises(UnsupportedDegreeError):
            eval_kernel(f, *(np.zeros(2) for _ in range(7)))


class TestProjectionKernel:
    def test_zero_mean_under_null(self, tet):
        for rho in (0.04, 0.2, 0.5):
            model = equicorrelation_cov(4, rho)
            g = projection_kernel(tet, model)
            assert abs(kernel_mean(g, model)) <= 1e-12

    def test_variance_identity(self, tet):
        for rho in (0.04, 0.2, 0.5):
            model = equicorrelation_cov(4, rho)
            g = projection_kernel(tet, model)
            var = kernel_second_moment(g, model) - kernel_mean(g, model) ** 2
            grad = tet.gradient(model.theta)
            quad = grad @ wishart_cov(model) @ grad / 4.0
            assert var == pytest.approx(quad, rel=1e-10)

    def test_matches_partial_expectation_symbolically(self):
        rng = np.random.default_rng(61)
        for _ in range(20):
            p = int(rng.integers(2, 5))
            f = random_constraint(rng, p, int(rng.integers(1, 4)))
            model = random_pd_model(rng, p)
            direct = projection_kernel(f, model)
            integrated = partial_expectation(symmetric_kernel(f), model, keep=1)
            assert kernels_equal(direct, integrated, tol=1e-12 * max(1.0, direct.max_abs_coeff))

    def test_value_at_zero_matches_integrated_form(self, tet):
        model = equicorrelation_cov(4, 0.2)
        zero = np.zeros(4)
        direct = projection_kernel(tet, model).evaluate(zero)
        integrated = partial_expectation(symmetric_kernel(tet), model, keep=1).evaluate(zero)
        assert direct == pytest.approx(integrated, abs=1e-14)


class TestPartialExpectation:
    def test_keep_zero_gives_constraint_value(self, tet):
        model = equicorrelation_cov(4, 0.3)
        const = partial_expectation(symmetric_kernel(tet), model, keep=0)
        assert const.arity == 0
        assert abs(const.constant - tet.evaluate(model.theta)) <= 1e-12

    def test_keep_all_is_identity(self, tet):
        model = equicorrelation_cov(4, 0.3)
        h = symmetric_kernel(tet)
        assert kernels_equal(partial_expectation(h, model, keep=2), h)

    def test_off_null_constant(self):
        # full integration must reproduce the constraint value off-null too
        rng = np.random.default_rng(67)
        f = random_constraint(rng, 3, 2)
        model = random_pd_model(rng, 3)
        const = partial_expectation(symmetric_kernel(f), model, keep=0)
        assert const.constant == pytest.approx(f.evaluate(model.theta), rel=1e-11, abs=1e-12)


class TestHoeffdingProjections:
    def test_first_projection_is_centered_projection_kernel(self, tet):
        model = equicorrelation_cov(4, 0.2)  # null model: f(theta) = 0
        pi1 = hoeffding_projection(tet, model, 1)
        assert kernels_equal(pi1, projection_kernel(tet, model))

    def test_canonical_property(self):
        rng = np.random.default_rng(71)
        for degree in (2, 3):
            f = random_constraint(rng, 3, degree)
            model = random_pd_model(rng, 3)
            for r in range(1, degree + 1):
                proj = hoeffding_projection(f, model, r)
                assert proj.is_canonical
                scale = max(1.0, proj.max_abs_coeff)
                assert canonical_defect(proj, model) <= 1e-12 * scale

    def test_order_two_inclusion_exclusion_at_null(self, tet):
        # h(x1, x2) - g(x1) - g(x2) - pi_2(x1, x2) - f(theta) == 0 when f(theta) = 0
        model = equicorrelation_cov(4, 0.2)
        h = symmetric_kernel(tet)
        g = projection_kernel(tet, model)
        pi2 = hoeffding_projection(tet, model, 2)
        entries = list(h.monomials)
        for slot in (1, 2):
            entries.extend(
                (-c, tuple((slot, u, v) for (_, u, v) in factors))
                for c, factors in g.monomials
            )
        entries.extend((-c, factors) for c, factors in pi2.monomials)
        entries.append((-tet.evaluate(model.theta), ()))
        residual = MixedKernel(2, 4, entries)
        assert residual.max_abs_coeff <= 1e-12

    def test_pointwise_reconstruction(self):
        from itertools import combinations

        rng = np.random.default_rng(73)
        for degree in (2, 3):
            f = random_constraint(rng, 3, degree)
            model = random_pd_model(rng, 3)
            projections = {r: hoeffding_projection(f, model, r) for r in range(1, degree + 1)}
            for _ in range(5):
                args = [rng.normal(size=3) for _ in range(degree)]
                total = f.evaluate(model.theta)
                for r, proj in projections.items():
                    for subset in combinations(range(degree), r):
                        total += proj.evaluate(*(args[i] for i in subset))
                direct = eval_kernel(f, *args)
                assert direct == pytest.approx(total, rel=1e-10, abs=1e-10)

    def test_zero_kernel_at_singular_point(self, tet, identity4):
        # at the identity the projection kernel vanishes identically
        pi1 = hoeffding_projection(tet, identity4, 1)
        assert pi1.max_abs_coeff == 0.0


class TestIntegrateSlots:
    def test_unused_slot_integrates_to_same_kernel(self, tet):
        model = equicorrelation_cov(4, 0.1)
        raw = unbiased_kernel(tet)
        same = integrate_slots(raw, [], model)
        assert kernels_equal(raw, same)

    def test_single_slot_against_manual_expectation(self):
        # E over x2 of x1[1]x1[2] * x2[1]x2[2] at equicorrelation
        f = PolyConstraint(2, 0.0, [(1.0, [(1, 2), (1, 2)])])
        model = equicorrelation_cov(2, 0.4)
        raw = unbiased_kernel(f)
        reduced = integrate_slots(raw, [2], model)
        assert reduced.arity == 1
        assert reduced.monomials == ((0.4, ((1, 1, 2),)),)
