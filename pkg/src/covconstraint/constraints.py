"""Polynomial equality constraints in the entries of a covariance matrix.

A constraint is a polynomial ``f`` in the upper-diagonal entries
``theta[u, v]`` (1-based pairs with ``u <= v``), written as a constant
plus monomials, each a coefficient times a multiset of index pairs.
The tetrad -- a 2x2 off-diagonal minor, vanishing under a one-factor
model -- is the prototypical example and gets its own constructor.
"""

from __future__ import annotations

import re

import numpy as np


class ConstraintParseError(ValueError):
    """Constraint text does not follow the documented grammar."""


def canonical_pair(u: int, v: int) -> tuple[int, int]:
    u, v = int(u), int(v)
    if u < 1 or v < 1:
        raise ValueError(f"pair indices are 1-based positive integers, got ({u},{v})")
    return (u, v) if u <= v else (v, u)


def upper_pairs(p: int) -> list[tuple[int, int]]:
    """Canonical ordering of the p(p+1)/2 upper-diagonal pairs."""
    return [(u, v) for u in range(1, p + 1) for v in range(u, p + 1)]


class PolyConstraint:
    """Polynomial ``f(theta) = a0 + sum_k coeff_k * prod theta[pair]``.

    Monomials with identical pair multisets are merged on construction
    and zero coefficients dropped; at least one monomial must survive
    (``f`` non-constant).  ``degree`` is the largest multiset size.
    """

    def __init__(self, p: int, a0: float, monomials):
        p = int(p)
        if p < 2:
            raise ValueError(f"ambient dimension must be >= 2, got {p}")
        merged: dict[tuple, float] = {}
        for coeff, pairs in monomials:
            pairs = tuple(sorted(canonical_pair(u, v) for (u, v) in pairs))
            if not pairs:
                raise ValueError("monomials must contain at least one pair; fold constants into a0")
            for (u, v) in pairs:
                if v > p:
                    raise ValueError(f"pair ({u},{v}) outside dimension p={p}")
            merged[pairs] = merged.get(pairs, 0.0) + float(coeff)
        cleaned = tuple(
            (coeff, pairs) for pairs, coeff in sorted(merged.items()) if coeff != 0.0
        )
        if not cleaned:
            raise ValueError("constraint is constant: every monomial cancelled")
        self.p = p
        self.a0 = float(a0)
        self.monomials = cleaned
        self.degree = max(len(pairs) for _, pairs in cleaned)

    def __repr__(self) -> str:
        return f"PolyConstraint(p={self.p}, degree={self.degree}, terms={len(self.monomials)})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PolyConstraint)
            and self.p == other.p
            and self.a0 == other.a0
            and self.monomials == other.monomials
        )

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p, self.p):
            raise ValueError(f"expected a {self.p}x{self.p} matrix, got shape {theta.shape}")
        return theta

    def evaluate(self, theta) -> float:
        """Value of ``f`` at a symmetric matrix (PD not required)."""
        theta = self._check_theta(theta)
        total = self.a0
        for coeff, pairs in self.monomials:
            prod = coeff
            for (u, v) in pairs:
                prod *= theta[u - 1, v - 1]
            total += prod
        return float(total)

    def gradient(self, theta) -> np.ndarray:
        """Gradient over upper-diagonal coordinates, in `upper_pairs` order.

        Each monomial contributes, at coordinate (u, v) with multiplicity
        k in its multiset, ``k * coeff * theta[u,v]^(k-1) * prod(rest)``.
        """
        theta = self._check_theta(theta)
        grad: dict[tuple[int, int], float] = {}
        for coeff, pairs in self.monomials:
            counts: dict[tuple[int, int], int] = {}
            for pair in pairs:
                counts[pair] = counts.get(pair, 0) + 1
            for (u, v), mult in counts.items():
                term = mult * coeff * theta[u - 1, v - 1] ** (mult - 1)
                for (w, z), other_mult in counts.items():
                    if (w, z) != (u, v):
                        term *= theta[w - 1, z - 1] ** other_mult
                grad[(u, v)] = grad.get((u, v), 0.0) + term
        return np.array([grad.get(pair, 0.0) for pair in upper_pairs(self.p)])

    def to_text(self) -> str:
        """Serialize to the constraint grammar: `a0 ; coeff * (u,v)(u,v)...`."""
        chunks = [repr(self.a0)]
        for coeff, pairs in self.monomials:
            body = "".join(f"({u},{v})" for (u, v) in pairs)
            chunks.append(f"{coeff!r} * {body}")
        return " ; ".join(chunks)


def tetrad(u: int, v: int, w: int, z: int, p: int | None = None) -> PolyConstraint:
    """Tetrad ``theta[u,z]*theta[v,w] - theta[u,w]*theta[v,z]``.

    The four indices must be pairwise distinct; the ambient dimension
    defaults to the largest index used.
    """
    idx = (u, v, w, z)
    if len(set(idx)) != 4:
        raise ValueError(f"tetrad indices must be pairwise distinct, got {idx}")
    if min(idx) < 1:
        raise ValueError("tetrad indices are 1-based")
    if p is None:
        p = max(idx)
    elif max(idx) > p:
        raise ValueError(f"index {max(idx)} outside dimension p={p}")
    return PolyConstraint(
        p,
        0.0,
        [
            (1.0, [canonical_pair(u, z), canonical_pair(v, w)]),
            (-1.0, [canonical_pair(u, w), canonical_pair(v, z)]),
        ],
    )


_PAIR_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_TETRAD_RE = re.compile(r"^tetrad\s*[:\(]\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)?$")


def parse_constraint(text: str, p: int | None = None) -> PolyConstraint:
    """Parse the plain-text constraint grammar.

    Grammar (whitespace-insensitive)::

        constraint := a0 ( ';' monomial )+
        monomial   := coeff '*' pair+
        pair       := '(' int ',' int ')'

    The leading field is the constant ``a0``; every later field is a
    coefficient times a product of 1-based index pairs.  The shorthand
    ``tetrad:u,v,w,z`` is also accepted.  If ``p`` is omitted it is
    inferred as the largest index appearing in the text.
    """
    text = text.strip()
    m = _TETRAD_RE.match(text)
    if m:
        return tetrad(*(int(g) for g in m.groups()), p=p)
    chunks = [chunk.strip() for chunk in text.split(";")]
    if len(chunks) < 2:
        raise ConstraintParseError(
            "expected 'a0 ; coeff * (u,v)...'; a constraint needs at least one monomial"
        )
    try:
        a0 = float(chunks[0])
    except ValueError as exc:
        raise ConstraintParseError(f"cannot parse constant term {chunks[0]!r}") from exc
    monomials = []
    max_index = 0
    for chunk in chunks[1:]:
        if "*" not in chunk:
            raise ConstraintParseError(f"monomial {chunk!r} is missing 'coeff *'")
        coeff_text, _, pairs_text = chunk.partition("*")
        try:
            coeff = float(coeff_text)
        except ValueError as exc:
            raise ConstraintParseError(f"cannot parse coefficient {coeff_text.strip()!r}") from exc
        pairs = [(int(a), int(b)) for a, b in _PAIR_RE.findall(pairs_text)]
        leftover = _PAIR_RE.sub("", pairs_text).strip()
        if leftover or not pairs:
            raise ConstraintParseError(f"cannot parse pair list {pairs_text.strip()!r}")
        max_index = max(max_index, max(max(pair) for pair in pairs))
        monomials.append((coeff, pairs))
    if p is None:
        p = max(max_index, 2)
    try:
        return PolyConstraint(p, a0, monomials)
    except ValueError as exc:
        raise ConstraintParseError(str(exc)) from exc
