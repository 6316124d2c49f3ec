"""Symbolic U-statistic kernels for polynomial covariance constraints.

A :class:`MixedKernel` is a polynomial in ``r`` vector arguments: a sum
of monomials whose factors are coordinate products ``x[u] * x[v]`` bound
to an argument slot.  Because the arguments are i.i.d. Gaussian,
integrating out a slot replaces its accumulated coordinate indices by an
exact Isserlis moment, which is what makes partial expectations and
Hoeffding projections computable in closed form.

The symmetrized kernel is *evaluated* by averaging the unbiased kernel
over argument permutations (memory stays linear in the monomial count),
while moment and projection computations operate on an explicitly
symmetrized symbolic object; both routes require the factorial budget
``arity! <= 720``.
"""

from __future__ import annotations

from itertools import combinations, permutations
from math import factorial

import numpy as np

from .constraints import PolyConstraint
from .models import CovModel
from .wick import isserlis_moment

MAX_EVAL_ARITY = 6


class UnsupportedDegreeError(ValueError):
    """Kernel arity exceeds the supported permutation budget."""


class KernelConsistencyError(RuntimeError):
    """Two exact computation paths disagree beyond tolerance."""


def _merge(entries, drop_zero: bool = True):
    merged: dict[tuple, float] = {}
    for coeff, factors in entries:
        factors = tuple(sorted(factors))
        merged[factors] = merged.get(factors, 0.0) + float(coeff)
    items = sorted(merged.items())
    if drop_zero:
        items = [(factors, coeff) for factors, coeff in items if coeff != 0.0]
    return tuple((coeff, factors) for factors, coeff in items)


class MixedKernel:
    """Sum of monomials ``coeff * prod x_slot[u] * x_slot[v]``.

    ``monomials`` is a tuple of ``(coeff, factors)`` with ``factors`` a
    sorted tuple of ``(slot, u, v)`` triples (1-based slots and
    coordinates); an empty factor tuple is the constant term.  Instances
    are immutable; duplicate monomials are merged on construction.
    """

    def __init__(self, arity: int, p: int, monomials, theta: CovModel | None = None,
                 is_canonical: bool = False):
        arity = int(arity)
        if arity < 0:
            raise ValueError("arity must be nonnegative")
        self.arity = arity
        self.p = int(p)
        self.theta = theta
        self.is_canonical = bool(is_canonical)
        for coeff, factors in monomials:
            for (slot, u, v) in factors:
                if not 1 <= slot <= arity:
                    raise ValueError(f"slot {slot} outside [1, {arity}]")
                if not (1 <= u <= v <= self.p):
                    raise ValueError(f"bad coordinate pair ({u},{v}) for p={self.p}")
        self.monomials = _merge(monomials)

    def __repr__(self) -> str:
        return (f"MixedKernel(arity={self.arity}, p={self.p}, "
                f"terms={len(self.monomials)})")

    @property
    def constant(self) -> float:
        for coeff, factors in self.monomials:
            if not factors:
                return coeff
        return 0.0

    @property
    def max_abs_coeff(self) -> float:
        return max((abs(c) for c, _ in self.monomials), default=0.0)

    def evaluate(self, *args) -> float:
        """Value at ``arity`` argument vectors in R^p."""
        if len(args) != self.arity:
            raise ValueError(f"expected {self.arity} arguments, got {len(args)}")
        args = [np.asarray(a, dtype=float) for a in args]
        total = 0.0
        for coeff, factors in self.monomials:
            term = coeff
            for (slot, u, v) in factors:
                x = args[slot - 1]
                term *= x[u - 1] * x[v - 1]
            total += term
        return float(total)

    def evaluate_rows(self, X, idx) -> np.ndarray:
        """Vectorized evaluation on row tuples of a sample matrix.

        ``idx`` has shape (T, arity); row t supplies the argument vectors
        ``X[idx[t, 0]], ..., X[idx[t, arity-1]]`` (0-based row indices).
        """
        X = np.asarray(X, dtype=float)
        idx = np.asarray(idx, dtype=np.intp)
        if idx.ndim == 1:
            idx = idx[:, None]
        if idx.shape[1] != self.arity:
            raise ValueError(f"index tuples must have width {self.arity}")
        out = np.zeros(idx.shape[0])
        for coeff, factors in self.monomials:
            term = np.full(idx.shape[0], coeff)
            for (slot, u, v) in factors:
                rows = idx[:, slot - 1]
                term = term * X[rows, u - 1] * X[rows, v - 1]
            out += term
        return out


def unbiased_kernel(f: PolyConstraint) -> MixedKernel:
    """Kernel in ``degree`` arguments whose Gaussian mean is ``f(theta)``.

    Each monomial's pairs are bound one per slot, in order: the pair
    multiset ``(p1, ..., pr)`` becomes ``x_1[p1] * ... * x_r[pr]``; slots
    beyond ``r`` stay unused for lower-degree monomials.
    """
    m = f.degree
    entries = [(f.a0, ())]
    for coeff, pairs in f.monomials:
        factors = tuple((slot, u, v) for slot, (u, v) in enumerate(pairs, start=1))
        entries.append((coeff, factors))
    return MixedKernel(m, f.p, entries)


def symmetrize(kernel: MixedKernel) -> MixedKernel:
    """Average of a kernel over all permutations of its argument slots."""
    r = kernel.arity
    if r > MAX_EVAL_ARITY:
        raise UnsupportedDegreeError(f"arity {r} exceeds the permutation budget {MAX_EVAL_ARITY}")
    if r <= 1:
        return kernel
    scale = 1.0 / factorial(r)
    entries = []
    for perm in permutations(range(1, r + 1)):
        relabel = {old: new for old, new in zip(range(1, r + 1), perm)}
        for coeff, factors in kernel.monomials:
            entries.append(
                (coeff * scale, tuple((relabel[slot], u, v) for (slot, u, v) in factors))
            )
    return MixedKernel(r, kernel.p, entries, theta=kernel.theta)


def symmetric_kernel(f: PolyConstraint) -> MixedKernel:
    """Symbolic symmetrized kernel for ``f`` (used by moments/projections)."""
    return symmetrize(unbiased_kernel(f))


def eval_kernel(f: PolyConstraint, *args) -> float:
    """Symmetrized-kernel value via permutation averaging at call time."""
    m = f.degree
    if m > MAX_EVAL_ARITY:
        raise UnsupportedDegreeError(f"degree {m} exceeds the permutation budget {MAX_EVAL_ARITY}")
    if len(args) != m:
        raise ValueError(f"expected {m} arguments, got {len(args)}")
    raw = unbiased_kernel(f)
    return float(np.mean([raw.evaluate(*(args[i] for i in perm))
                          for perm in permutations(range(m))]))


def eval_kernel_rows(f: PolyConstraint, X, idx) -> np.ndarray:
    """Vectorized symmetrized-kernel values on row tuples of ``X``."""
    m = f.degree
    if m > MAX_EVAL_ARITY:
        raise UnsupportedDegreeError(f"degree {m} exceeds the permutation budget {MAX_EVAL_ARITY}")
    raw = unbiased_kernel(f)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim == 1:
        idx = idx[:, None]
    acc = np.zeros(idx.shape[0])
    for perm in permutations(range(m)):
        acc += raw.evaluate_rows(X, idx[:, perm])
    return acc / factorial(m)


def projection_kernel(f: PolyConstraint, theta: CovModel) -> MixedKernel:
    """One-argument kernel ``g(x) = E[h(x, X_2, ..., X_m)]``, built directly.

    For a monomial with pairs ``p_1..p_r`` the fixed argument lands on
    pair ``j`` with probability ``1/m`` (the other pairs integrate to
    their covariances) and on an unused slot with probability
    ``(m - r)/m`` (everything integrates, leaving a constant).
    """
    if f.p != theta.p:
        raise ValueError(f"constraint dimension {f.p} != model dimension {theta.p}")
    m = f.degree
    entries = [(f.a0, ())]
    for coeff, pairs in f.monomials:
        r = len(pairs)
        full_prod = coeff
        for (u, v) in pairs:
            full_prod *= theta.entry(u, v)
        if r < m:
            entries.append((full_prod * (m - r) / m, ()))
        for j, (u, v) in enumerate(pairs):
            rest = coeff / m
            for i, (w, z) in enumerate(pairs):
                if i != j:
                    rest *= theta.entry(w, z)
            entries.append((rest, ((1, u, v),)))
    return MixedKernel(1, f.p, entries, theta=theta)


def integrate_slots(kernel: MixedKernel, slots, theta: CovModel) -> MixedKernel:
    """Integrate out the given argument slots against ``N_p(0, theta)``.

    Per monomial, each integrated slot's accumulated coordinate indices
    are replaced by their exact Isserlis moment (a constant multiplying
    the monomial); remaining slots are renumbered in increasing order.
    """
    slots = frozenset(int(s) for s in slots)
    for s in slots:
        if not 1 <= s <= kernel.arity:
            raise ValueError(f"slot {s} outside [1, {kernel.arity}]")
    kept = [s for s in range(1, kernel.arity + 1) if s not in slots]
    renumber = {old: new for new, old in enumerate(kept, start=1)}
    entries = []
    for coeff, factors in kernel.monomials:
        by_slot: dict[int, list[int]] = {}
        kept_factors = []
        for (slot, u, v) in factors:
            if slot in slots:
                by_slot.setdefault(slot, []).extend((u, v))
            else:
                kept_factors.append((renumber[slot], u, v))
        value = coeff
        for coords in by_slot.values():
            value *= isserlis_moment(theta, coords)
            if value == 0.0:
                break
        entries.append((value, tuple(kept_factors)))
    return MixedKernel(len(kept), kernel.p, entries, theta=theta)


def partial_expectation(kernel: MixedKernel, theta: CovModel, keep: int) -> MixedKernel:
    """Integrate out all argument slots beyond the first ``keep``."""
    if not 0 <= keep <= kernel.arity:
        raise ValueError(f"keep must lie in [0, {kernel.arity}], got {keep}")
    return integrate_slots(kernel, range(keep + 1, kernel.arity + 1), theta)


def kernel_mean(kernel: MixedKernel, theta: CovModel) -> float:
    """Exact Gaussian mean of the kernel (all slots integrated out)."""
    return integrate_slots(kernel, range(1, kernel.arity + 1), theta).constant


def kernel_second_moment(kernel: MixedKernel, theta: CovModel) -> float:
    """Exact ``E[K(X_1, ..., X_r)^2]``.

    The squared kernel is expanded monomial pair by monomial pair; slot
    independence factorizes each expectation into one Isserlis moment
    per slot over that slot's accumulated coordinate indices.
    """
    monomials = kernel.monomials
    slot_coords = []
    for coeff, factors in monomials:
        by_slot: dict[int, tuple[int, ...]] = {}
        for (slot, u, v) in factors:
            by_slot[slot] = by_slot.get(slot, ()) + (u, v)
        slot_coords.append(by_slot)
    total = 0.0
    for a in range(len(monomials)):
        coeff_a, _ = monomials[a]
        coords_a = slot_coords[a]
        for b in range(a, len(monomials)):
            coeff_b, _ = monomials[b]
            coords_b = slot_coords[b]
            value = coeff_a * coeff_b
            for slot in set(coords_a) | set(coords_b):
                value *= isserlis_moment(theta, coords_a.get(slot, ()) + coords_b.get(slot, ()))
                if value == 0.0:
                    break
            total += value if a == b else 2.0 * value
    return total


def hoeffding_projection(f: PolyConstraint, theta: CovModel, r: int) -> MixedKernel:
    """Degree-``r`` Hoeffding projection of the symmetrized kernel.

    Built by inclusion-exclusion over argument subsets:
    ``pi_r(x_1..x_r) = sum_{S subset [r]} (-1)^(r-|S|) E[h | x_S]``,
    where the conditional expectation integrates every slot outside S.
    The result is completely degenerate (canonical): integrating any
    single argument yields the zero kernel, which is asserted on
    construction.
    """
    m = f.degree
    if not 1 <= r <= m:
        raise ValueError(f"projection order must lie in [1, {m}], got {r}")
    h = symmetric_kernel(f)
    partials = {s: partial_expectation(h, theta, keep=s) for s in range(r + 1)}
    entries = []
    for size in range(r + 1):
        sign = (-1.0) ** (r - size)
        q = partials[size]
        for subset in combinations(range(1, r + 1), size):
            relabel = {old: new for old, new in enumerate(subset, start=1)}
            for coeff, factors in q.monomials:
                entries.append(
                    (sign * coeff,
                     tuple((relabel[slot], u, v) for (slot, u, v) in factors))
                )
    proj = MixedKernel(r, f.p, entries, theta=theta, is_canonical=True)
    scale = max(1.0, proj.max_abs_coeff, h.max_abs_coeff)
    defect = canonical_defect(proj, theta)
    if defect > 1e-9 * scale:
        raise KernelConsistencyError(
            f"projection of order {r} is not canonical: defect {defect:.3e}"
        )
    return proj


def canonical_defect(kernel: MixedKernel, theta: CovModel) -> float:
    """Largest residual coefficient after integrating any single slot.

    Zero (up to rounding) exactly when the kernel is completely
    degenerate under ``theta``.
    """
    worst = 0.0
    for slot in range(1, kernel.arity + 1):
        reduced = integrate_slots(kernel, [slot], theta)
        worst = max(worst, reduced.max_abs_coeff)
    return worst
