"""Exact Gaussian product moments via Isserlis' (Wick's) theorem.

The mixed moment ``E[X_{i_1} ... X_{i_{2r}}]`` of centered jointly
Gaussian variables equals the sum over all (2r)!/(2^r r!) partitions of
the index list into pairs of the product of pairwise covariances; odd
moments vanish by symmetry.
"""

from __future__ import annotations

from math import factorial

from .models import CovModel


def pairing_count(r: int) -> int:
    """Number of perfect pairings of 2r items: (2r)! / (2^r r!)."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    return factorial(2 * r) // (2**r * factorial(r))


def all_pairings(items):
    """Yield every partition of ``items`` into unordered pairs.

    Requires an even number of items; pairs the first item with each
    remaining item and recurses.
    """
    items = list(items)
    if len(items) % 2:
        raise ValueError("cannot pair an odd number of items")
    if not items:
        yield []
        return
    first = items[0]
    rest = items[1:]
    for i, partner in enumerate(rest):
        for tail in all_pairings(rest[:i] + rest[i + 1 :]):
            yield [(first, partner)] + tail


def isserlis_moment(model: CovModel, key) -> float:
    """Exact ``E[prod_j X_{key_j}]`` for ``X ~ N_p(0, theta)``.

    ``key`` is a multiset of 1-based coordinate indices.  Odd-length keys
    return 0 exactly; the empty key returns 1.  Results are memoized on
    the model, keyed by the sorted multiset.
    """
    key = tuple(sorted(int(i) for i in key))
    for i in key:
        if not 1 <= i <= model.p:
            raise ValueError(f"coordinate index {i} outside [1, {model.p}]")
    if len(key) % 2:
        return 0.0
    return _moment(model, model.theta, key, model._moment_cache)


def _moment(model, theta, key, cache) -> float:
    if not key:
        return 1.0
    if len(key) == 2:
        return float(theta[key[0] - 1, key[1] - 1])
    hit = cache.get(key)
    if hit is not None:
        return hit
    first = key[0]
    rest = key[1:]
    total = 0.0
    for i in range(len(rest)):
        cov = theta[first - 1, rest[i] - 1]
        if cov == 0.0:
            continue
        sub = tuple(rest[:i] + rest[i + 1 :])
        total += cov * _moment(model, theta, sub, cache)
    cache[key] = total
    return total
