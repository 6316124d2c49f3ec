"""Test statistics: complete, incomplete, and block U-statistics, Wald tests,
and the decomposition of the incomplete statistic into its complete and
Bernoulli-noise parts.

The incomplete U-statistic averages the kernel over the m-tuples selected
by independent Bernoulli(N / C(n, m)) flips, one per increasing tuple in
lexicographic order, drawn from a dedicated random stream; its expected
number of kernel evaluations is the computational budget N.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb, sqrt

import numpy as np
from scipy import stats

from ._rng import derive, stream
from .constraints import PolyConstraint
from .kernels import KernelConsistencyError, eval_kernel_rows
from .models import CovModel, as_sample_matrix, sample_covariance
from .moments import sigma_g_sq, sigma_h_sq, wishart_cov, wishart_cov_matrix

MAX_ENUMERATED_TUPLES = 20_000_000
MAX_TOTAL_TUPLES = 1 << 62
_BERNOULLI_CHUNK = 1 << 22


class DegenerateSamplingError(RuntimeError):
    """The Bernoulli sampling selected zero tuples (the statistic divides
    by the selected count, so the caller must redraw or fail)."""


class DegenerateStudentizerError(RuntimeError):
    """A data-driven normalizer is non-positive; the outcome is undefined."""


class SingularHypothesisError(ValueError):
    """The constraint gradient vanishes at the model, so statistics
    normalized by the projection variance are undefined."""


@dataclass(frozen=True)
class BudgetPlan:
    """Sampling design of an incomplete U-statistic.

    ``budget`` is the expected number of selected tuples N; the Bernoulli
    success probability is ``budget / C(n, m)``.  ``seed`` (an int or a
    derived SeedSequence) identifies the dedicated sampling stream, so a
    plan applied to the same data is fully deterministic.
    """

    n: int
    m: int
    budget: int
    seed: object = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"kernel order must be >= 1, got {self.m}")
        if self.n < self.m:
            raise ValueError(f"need n >= m, got n={self.n}, m={self.m}")
        total = comb(self.n, self.m)
        if total > MAX_TOTAL_TUPLES:
            raise ValueError("C(n, m) too large to enumerate Bernoulli flips")
        if not 1 <= self.budget <= total:
            raise ValueError(
                f"budget must lie in [1, C(n,m)={total}], got {self.budget}"
            )

    @property
    def total_tuples(self) -> int:
        return comb(self.n, self.m)

    @property
    def p_sample(self) -> float:
        return self.budget / self.total_tuples


@dataclass(frozen=True)
class TestOutcome:
    """Result of one test statistic on one sample.

    ``pvalue`` is always the two-sided normal p-value ``2 Phi(-|z|)``;
    one-sided rejection rules are applied by the caller from ``zscore``.
    ``components`` records the variance pieces behind the normalizer.
    """

    statistic: float
    normalizer: float
    zscore: float
    pvalue: float
    nhat: int | None = None
    components: dict = field(default_factory=dict)


def resolve_budget(budget, n: int) -> int:
    """Budget flag: an absolute integer N, or 'xK' meaning N = K * n."""
    if isinstance(budget, str):
        text = budget.strip().lower()
        if text.startswith("x"):
            return int(round(float(text[1:]) * n))
        return int(text)
    return int(budget)


def _two_sided_pvalue(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


def all_index_tuples(n: int, m: int) -> np.ndarray:
    """All increasing m-tuples of row indices 0..n-1, lexicographic."""
    total = comb(n, m)
    if total > MAX_ENUMERATED_TUPLES:
        raise ValueError(
            f"C({n},{m}) = {total} tuples is too many to enumerate; "
            "use an incomplete statistic"
        )
    out = np.fromiter(
        (i for tup in combinations(range(n), m) for i in tup),
        dtype=np.intp, count=total * m,
    )
    return out.reshape(total, m)


def unrank_index_tuples(ranks, n: int, m: int) -> np.ndarray:
    """Increasing m-tuples at the given lexicographic ranks.

    Vectorized over ranks: for each coordinate position the number of
    completions after placing value w is C(n-1-w, remaining), so prefix
    sums of those counts turn rank decoding into a searchsorted.
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    out = np.empty((ranks.shape[0], m), dtype=np.intp)
    if ranks.shape[0] == 0:
        return out
    if np.any(ranks < 0) or np.any(ranks >= comb(n, m)):
        raise ValueError("rank outside [0, C(n, m))")
    residual = ranks.copy()
    prev = np.full(ranks.shape[0], -1, dtype=np.int64)
    values = np.arange(n, dtype=np.int64)
    for t in range(m):
        remaining = m - t - 1
        counts = np.array([comb(n - 1 - int(w), remaining) for w in values],
                          dtype=np.int64)
        prefix = np.concatenate(([0], np.cumsum(counts)))
        target = residual + prefix[prev + 1]
        w = np.searchsorted(prefix, target, side="right") - 1
        residual = target - prefix[w]
        out[:, t] = w
        prev = w
    return out


def bernoulli_ranks(plan: BudgetPlan) -> np.ndarray:
    """Lexicographic ranks of the tuples selected by the plan's flips.

    One Bernoulli(p) flip per tuple, consumed in lexicographic order from
    the plan's dedicated stream; chunked generation keeps memory bounded
    without changing the draw.
    """
    rng = stream(plan.seed, "tuple-sampling")
    total = plan.total_tuples
    p = plan.p_sample
    selected = []
    offset = 0
    while offset < total:
        size = min(_BERNOULLI_CHUNK, total - offset)
        hits = np.flatnonzero(rng.random(size) < p)
        if hits.size:
            selected.append(hits.astype(np.int64) + offset)
        offset += size
    if not selected:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(selected)


@dataclass(frozen=True)
class IncompleteDraw:
    """Realized Bernoulli selection with its kernel evaluations."""

    plan: BudgetPlan
    nhat: int
    values: np.ndarray

    @property
    def value(self) -> float:
        return float(np.sum(self.values) / self.nhat)


def draw_incomplete(f: PolyConstraint, X, plan: BudgetPlan) -> IncompleteDraw:
    """Evaluate the kernel on exactly the selected tuples.

    Raises :class:`DegenerateSamplingError` when no tuple is selected.
    """
    X = as_sample_matrix(X, min_rows=plan.m)
    if X.shape[0] != plan.n:
        raise ValueError(f"plan expects n={plan.n} rows, got {X.shape[0]}")
    ranks = bernoulli_ranks(plan)
    if ranks.size == 0:
        raise DegenerateSamplingError("Bernoulli sampling selected zero tuples")
    idx = unrank_index_tuples(ranks, plan.n, plan.m)
    values = eval_kernel_rows(f, X, idx)
    return IncompleteDraw(plan=plan, nhat=int(ranks.size), values=values)


def complete_ustat(f: PolyConstraint, X) -> float:
    """Exact average of the symmetrized kernel over all C(n, m) tuples."""
    X = as_sample_matrix(X, min_rows=f.degree)
    n = X.shape[0]
    idx = all_index_tuples(n, f.degree)
    values = eval_kernel_rows(f, X, idx)
    return float(np.sum(values) / idx.shape[0])


def incomplete_ustat(f: PolyConstraint, X, plan: BudgetPlan) -> tuple[float, int]:
    """Incomplete U-statistic under Bernoulli sampling: (value, selected count)."""
    draw = draw_incomplete(f, X, plan)
    return draw.value, draw.nhat


def block_estimator(f: PolyConstraint, X) -> float:
    """Kernel averaged over floor(n/m) disjoint consecutive sample batches."""
    X = as_sample_matrix(X, min_rows=f.degree)
    m = f.degree
    blocks = X.shape[0] // m
    idx = np.arange(blocks * m, dtype=np.intp).reshape(blocks, m)
    return float(np.mean(eval_kernel_rows(f, X, idx)))


def projection_ustat(f: PolyConstraint, theta: CovModel, X, r: int) -> float:
    """Degree-r U-statistic of the order-r Hoeffding projection kernel."""
    from .kernels import hoeffding_projection

    X = as_sample_matrix(X, min_rows=f.degree)
    proj = hoeffding_projection(f, theta, r)
    idx = all_index_tuples(X.shape[0], r)
    return float(np.mean(proj.evaluate_rows(X, idx)))


def wald_standardized(f: PolyConstraint, theta: CovModel, X) -> TestOutcome:
    """Wald statistic normalized by the true limiting variance.

    ``sqrt(n) f(theta_hat)`` over ``sqrt(grad f' V(theta) grad f)``; the
    hypothesis must be regular at ``theta`` (nonvanishing gradient).
    """
    X = as_sample_matrix(X)
    n = X.shape[0]
    grad = f.gradient(theta.theta)
    norm_sq = float(grad @ wishart_cov(theta) @ grad)
    if norm_sq <= 0.0:
        raise SingularHypothesisError(
            "constraint gradient vanishes at the model; the standardized "
            "Wald statistic is undefined"
        )
    statistic = sqrt(n) * f.evaluate(sample_covariance(X))
    zscore = statistic / sqrt(norm_sq)
    return TestOutcome(
        statistic=statistic,
        normalizer=sqrt(norm_sq),
        zscore=zscore,
        pvalue=_two_sided_pvalue(zscore),
        components={"normalizer_sq": norm_sq, "sigma_g_sq": norm_sq / f.degree**2},
    )


def wald_studentized(f: PolyConstraint, X) -> TestOutcome:
    """Wald statistic with the sample-covariance plug-in normalizer."""
    X = as_sample_matrix(X)
    n = X.shape[0]
    theta_hat = sample_covariance(X)
    grad = f.gradient(theta_hat)
    norm_sq = float(grad @ wishart_cov_matrix(theta_hat) @ grad)
    if norm_sq <= 0.0:
        raise DegenerateStudentizerError(
            f"plug-in normalizer is non-positive ({norm_sq!r})"
        )
    statistic = sqrt(n) * f.evaluate(theta_hat)
    zscore = statistic / sqrt(norm_sq)
    return TestOutcome(
        statistic=statistic,
        normalizer=sqrt(norm_sq),
        zscore=zscore,
        pvalue=_two_sided_pvalue(zscore),
        components={"normalizer_sq": norm_sq},
    )


def icu_standardized(f: PolyConstraint, theta: CovModel, X, plan: BudgetPlan,
                     draw: IncompleteDraw | None = None) -> TestOutcome:
    """Incomplete U-statistic normalized by its exact limiting variance.

    ``z = sqrt(n) U' / sigma`` with ``sigma^2 = m^2 sigma_g^2 +
    (n/N) sigma_h^2``; both variance components are exact Isserlis
    computations, so the normalizer is strictly positive whether or not
    the hypothesis is singular.
    """
    X = as_sample_matrix(X)
    if draw is None:
        draw = draw_incomplete(f, X, plan)
    m = f.degree
    n = plan.n
    sg2 = sigma_g_sq(f, theta)
    sh2 = sigma_h_sq(f, theta)
    alpha = n / plan.budget
    sigma_sq = m**2 * sg2 + alpha * sh2
    value = draw.value
    zscore = sqrt(n) * value / sqrt(sigma_sq)
    return TestOutcome(
        statistic=value,
        normalizer=sqrt(sigma_sq),
        zscore=zscore,
        pvalue=_two_sided_pvalue(zscore),
        nhat=draw.nhat,
        components={
            "sigma_g_sq": sg2,
            "sigma_h_sq": sh2,
            "sigma_sq": sigma_sq,
            "alpha_n": alpha,
            "p_sample": plan.p_sample,
        },
    )


def sigma_g_hat_sq(f: PolyConstraint, X, seed, split_count: int | str = "auto") -> float:
    """Split-sample estimate of the projection-kernel variance.

    For each sample index i, a random permutation of the other rows is
    cut into two disjoint sets of ``split_count`` (m-1)-tuples; averaging
    the kernel evaluations ``h(X_i, tuple)`` within each set gives two
    estimates of the projection value at X_i that are conditionally
    independent given X_i, so the mean of their products estimates the
    second moment of the projection kernel; subtracting the product of
    their means removes the squared constraint value under the null.
    The result may be negative; callers truncate at zero.
    """
    X = as_sample_matrix(X, min_rows=f.degree)
    n, _ = X.shape
    m = f.degree
    if m == 1:
        singles = eval_kernel_rows(f, X, np.arange(n, dtype=np.intp))
        return float(np.mean(singles**2) - np.mean(singles) ** 2)
    width = m - 1
    k_max = (n - 1) // (2 * width)
    if k_max < 1:
        raise ValueError(f"need n >= 2m - 1 rows for the variance split, got n={n}")
    k = k_max if split_count == "auto" else int(split_count)
    if not 1 <= k <= k_max:
        raise ValueError(f"split_count must lie in [1, {k_max}], got {split_count}")
    rng = stream(seed, "variance-split")
    rows_a = np.empty((n * k, m), dtype=np.intp)
    rows_b = np.empty((n * k, m), dtype=np.intp)
    others = np.empty(n - 1, dtype=np.intp)
    for i in range(n):
        others[:i] = np.arange(i)
        others[i:] = np.arange(i + 1, n)
        perm = others[rng.permutation(n - 1)]
        lo, hi = i * k, (i + 1) * k
        rows_a[lo:hi, 0] = i
        rows_b[lo:hi, 0] = i
        rows_a[lo:hi, 1:] = perm[: k * width].reshape(k, width)
        rows_b[lo:hi, 1:] = perm[k * width : 2 * k * width].reshape(k, width)
    g1 = eval_kernel_rows(f, X, rows_a).reshape(n, k).mean(axis=1)
    g2 = eval_kernel_rows(f, X, rows_b).reshape(n, k).mean(axis=1)
    return float(np.mean(g1 * g2) - np.mean(g1) * np.mean(g2))


def icu_studentized(f: PolyConstraint, X, plan: BudgetPlan,
                    draw: IncompleteDraw | None = None,
                    split_count: int | str = "auto") -> TestOutcome:
    """Incomplete U-statistic with a data-driven normalizer.

    ``sigma_hat^2 = m^2 max(sigma_g_hat^2, 0) + (n/N) sigma_h_hat^2``,
    where the kernel-variance part is the sample variance of the selected
    kernel evaluations and the projection part comes from
    :func:`sigma_g_hat_sq` on its own stream derived from the plan seed.
    """
    X = as_sample_matrix(X)
    if X.shape[0] < 3 * f.degree - 2:
        raise ValueError(f"need n >= 3m - 2 rows, got {X.shape[0]}")
    if draw is None:
        draw = draw_incomplete(f, X, plan)
    m = f.degree
    n = plan.n
    if draw.nhat < 2:
        raise DegenerateStudentizerError(
            "fewer than two selected tuples; kernel variance is undefined"
        )
    sh2_hat = float(np.var(draw.values, ddof=1))
    sg2_hat = sigma_g_hat_sq(f, X, derive(plan.seed, "studentizer"),
                             split_count=split_count)
    sigma_sq_hat = m**2 * max(sg2_hat, 0.0) + (n / plan.budget) * sh2_hat
    if sigma_sq_hat <= 0.0:
        raise DegenerateStudentizerError(
            f"estimated variance is non-positive ({sigma_sq_hat!r})"
        )
    value = draw.value
    zscore = sqrt(n) * value / sqrt(sigma_sq_hat)
    return TestOutcome(
        statistic=value,
        normalizer=sqrt(sigma_sq_hat),
        zscore=zscore,
        pvalue=_two_sided_pvalue(zscore),
        nhat=draw.nhat,
        components={
            "sigma_g_sq_hat": sg2_hat,
            "sigma_h_sq_hat": sh2_hat,
            "sigma_sq_hat": sigma_sq_hat,
            "alpha_n": n / plan.budget,
        },
    )


def block_standardized(f: PolyConstraint, theta: CovModel, X) -> TestOutcome:
    """Disjoint-batch kernel average standardized by the exact kernel sd.

    ``z = sqrt(floor(n/m)) S / sigma_h``; as an average of independent
    terms its normal approximation does not degrade near singularities.
    """
    X = as_sample_matrix(X, min_rows=f.degree)
    blocks = X.shape[0] // f.degree
    sh = sqrt(sigma_h_sq(f, theta))
    value = block_estimator(f, X)
    zscore = sqrt(blocks) * value / sh
    return TestOutcome(
        statistic=value,
        normalizer=sh,
        zscore=zscore,
        pvalue=_two_sided_pvalue(zscore),
        components={"sigma_h_sq": sh**2, "blocks": blocks},
    )


@dataclass(frozen=True)
class WnBnDecomposition:
    """Incomplete statistic split into complete and Bernoulli-noise parts:
    ``W = U + sqrt(1 - p) B`` with ``U' = (N / N_hat) W``."""

    u_complete: float
    b_noise: float
    w_combined: float
    u_incomplete: float
    nhat: int


def _b_noise_value(selected_sum: float, u_complete: float, plan: BudgetPlan) -> float:
    """``B = (sum over all tuples of (Z - p) h) / (N sqrt(1 - p))``.

    The unselected part telescopes against the complete sum, so only the
    selected kernel total and the complete statistic are needed.
    """
    p = plan.p_sample
    if p >= 1.0:
        raise ValueError("noise part is undefined at p = 1 (division by zero)")
    total_sum = plan.total_tuples * u_complete
    return (selected_sum - p * total_sum) / (plan.budget * sqrt(1.0 - p))


def wn_bn_decompose(f: PolyConstraint, X, plan: BudgetPlan,
                    draw: IncompleteDraw | None = None) -> WnBnDecomposition:
    """Recompute the incomplete statistic from its exact decomposition.

    Uses the same Bernoulli draws as :func:`incomplete_ustat` (the plan
    seed fixes them) and asserts the identity ``U' = (N / N_hat) W`` to
    rounding precision.
    """
    X = as_sample_matrix(X, min_rows=plan.m)
    if draw is None:
        draw = draw_incomplete(f, X, plan)
    u_n = complete_ustat(f, X)
    selected_sum = float(np.sum(draw.values))
    b_n = _b_noise_value(selected_sum, u_n, plan)
    w_n = u_n + sqrt(1.0 - plan.p_sample) * b_n
    u_prime = selected_sum / draw.nhat
    reconstructed = (plan.budget / draw.nhat) * w_n
    scale = max(abs(u_prime), abs(u_n), abs(b_n), 1e-30)
    if abs(u_prime - reconstructed) > 1e-12 * scale:
        raise KernelConsistencyError(
            f"decomposition identity violated: U'={u_prime!r} vs "
            f"(N/N_hat) W={reconstructed!r}"
        )
    return WnBnDecomposition(
        u_complete=u_n, b_noise=b_n, w_combined=w_n,
        u_incomplete=u_prime, nhat=draw.nhat,
    )
