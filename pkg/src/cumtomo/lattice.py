"""Subset-lattice combinatorics over a fixed set of monitor paths.

Path sets are bitmasks over the n monitor paths. The module provides the
superset-sum (zeta) transform and its Möbius inverse, both as a fast
O(n 2^n) sweep over the full lattice and as explicit matrices on restricted
domains, plus the correction-term matrix that eliminates large non-maximal
path sets from the inversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "PathSet",
    "MultiIndex",
    "CumulantVector",
    "all_nonempty_sets",
    "representative_multi_indices",
    "mobius_forward",
    "mobius_inverse",
    "mobius_forward_naive",
    "mobius_inverse_naive",
    "inversion_matrix",
    "zeta_matrix",
    "ModifiedInversion",
    "modified_inversion_matrix",
]


@dataclass(frozen=True, order=True)
class PathSet:
    """A set of monitor paths, stored as a bitmask of width n."""

    bits: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("path count must be non-negative")
        if not 0 <= self.bits < (1 << self.n):
            raise ValueError(f"bitmask {self.bits:#x} out of range for n={self.n}")

    @classmethod
    def from_members(cls, members: Iterable[int], n: int) -> "PathSet":
        bits = 0
        for j in members:
            if not 0 <= j < n:
                raise ValueError(f"path index {j} out of range for n={n}")
            bits |= 1 << j
        return cls(bits, n)

    @classmethod
    def full(cls, n: int) -> "PathSet":
        return cls((1 << n) - 1, n)

    def members(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.n) if self.bits >> j & 1)

    def card(self) -> int:
        return self.bits.bit_count()

    def is_empty(self) -> bool:
        return self.bits == 0

    def contains(self, j: int) -> bool:
        return bool(self.bits >> j & 1)

    def subset_of(self, other: "PathSet") -> bool:
        return self.bits & ~other.bits == 0

    def superset_of(self, other: "PathSet") -> bool:
        return other.bits & ~self.bits == 0

    def union(self, other: "PathSet") -> "PathSet":
        return PathSet(self.bits | other.bits, self.n)

    def intersection(self, other: "PathSet") -> "PathSet":
        return PathSet(self.bits & other.bits, self.n)

    def difference(self, other: "PathSet") -> "PathSet":
        return PathSet(self.bits & ~other.bits, self.n)

    def without(self, j: int) -> "PathSet":
        return PathSet(self.bits & ~(1 << j), self.n)

    def characteristic_vector(self) -> tuple[int, ...]:
        return tuple(1 if self.bits >> j & 1 else 0 for j in range(self.n))

    def subsets(self, include_empty: bool = False) -> Iterator["PathSet"]:
        """All subsets of this set (nonempty by default)."""
        sub = self.bits
        while True:
            if sub or include_empty:
                yield PathSet(sub, self.n)
            if sub == 0:
                return
            sub = (sub - 1) & self.bits

    def __str__(self) -> str:
        return "{" + ",".join(f"p{j + 1}" for j in self.members()) + "}"


def all_nonempty_sets(n: int) -> list[PathSet]:
    """Every nonempty path set, ordered by (cardinality, bitmask)."""
    sets = [PathSet(bits, n) for bits in range(1, 1 << n)]
    sets.sort(key=lambda p: (p.card(), p.bits))
    return sets


@dataclass(frozen=True)
class MultiIndex:
    """Multiplicity vector over the n monitor paths."""

    mult: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(m < 0 for m in self.mult):
            raise ValueError("multiplicities must be non-negative")

    @property
    def n(self) -> int:
        return len(self.mult)

    def size(self) -> int:
        return sum(self.mult)

    def support(self) -> PathSet:
        return PathSet.from_members(
            (j for j, m in enumerate(self.mult) if m >= 1), len(self.mult)
        )

    def expanded_indices(self) -> tuple[int, ...]:
        """Path indices with repetition, e.g. (2, 1, 0) -> (0, 0, 1)."""
        return tuple(j for j, m in enumerate(self.mult) for _ in range(m))


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Compositions of `total` into `parts` positive integers, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def representative_multi_indices(P: PathSet, i: int) -> list[MultiIndex]:
    """All multi-indices alpha with supp(alpha) = P and |alpha| = i.

    There are C(i-1, |P|-1) of them: each member of P takes at least one
    unit of multiplicity and the remaining i - |P| units are distributed
    freely.
    """
    k = P.card()
    if k < 1:
        raise ValueError("path set must be nonempty")
    if i < k:
        raise ValueError(
            f"no representative multi-index exists: order {i} < set size {k}"
        )
    members = P.members()
    out = []
    for comp in _compositions(i, k):
        mult = [0] * P.n
        for j, m in zip(members, comp):
            mult[j] = m
        out.append(MultiIndex(tuple(mult)))
    return out


@dataclass
class CumulantVector:
    """Sparse map from path sets to cumulant values, tagged with its order.

    `domain` is None for a full-lattice vector, or an explicit list of path
    sets (a support estimate) that every key must belong to.
    """

    order: int
    n: int
    entries: dict[PathSet, float] = field(default_factory=dict)
    domain: list[PathSet] | None = None

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("cumulant order must be positive")
        allowed = None if self.domain is None else set(self.domain)
        for P in self.entries:
            if P.n != self.n:
                raise ValueError("entry keyed by a set with the wrong width")
            if P.is_empty():
                raise ValueError("entries must not be keyed by the empty set")
            if allowed is not None and P not in allowed:
                raise ValueError(f"entry {P} lies outside the declared domain")

    def get(self, P: PathSet):
        return self.entries.get(P, 0.0)

    def support(self, tol: float = 0.0) -> list[PathSet]:
        return [P for P, v in self.entries.items() if abs(v) > tol]

    def as_vector(self, ordering: Sequence[PathSet]) -> list:
        return [self.entries.get(P, 0.0) for P in ordering]

    @classmethod
    def from_vector(
        cls, values: Sequence, ordering: Sequence[PathSet], order: int, n: int
    ) -> "CumulantVector":
        return cls(order, n, dict(zip(ordering, values)))


def _check_full_lattice(v: CumulantVector) -> None:
    if v.domain is not None:
        raise ValueError("transform requires a full-lattice vector")


def _sweep(values: list, n: int, sign: int) -> list:
    # In-place superset-sum (sign=+1) or its Möbius inverse (sign=-1);
    # generic over the entry type so exact rationals pass through.
    for j in range(n):
        bit = 1 << j
        for mask in range(len(values)):
            if not mask & bit:
                if sign > 0:
                    values[mask] = values[mask] + values[mask | bit]
                else:
                    values[mask] = values[mask] - values[mask | bit]
    return values


def mobius_forward(g: CumulantVector) -> CumulantVector:
    """Superset sums: f(P) = sum of g(Q) over Q >= P."""
    _check_full_lattice(g)
    n = g.n
    values = [0] * (1 << n)
    for P, v in g.entries.items():
        values[P.bits] = v
    _sweep(values, n, +1)
    entries = {PathSet(bits, n): values[bits] for bits in range(1, 1 << n)}
    return CumulantVector(g.order, n, entries)


def mobius_inverse(f: CumulantVector) -> CumulantVector:
    """Alternating superset sums: g(P) = sum over Q >= P of (-1)^(|Q|-|P|) f(Q)."""
    _check_full_lattice(f)
    n = f.n
    values = [0] * (1 << n)
    for P, v in f.entries.items():
        values[P.bits] = v
    _sweep(values, n, -1)
    entries = {PathSet(bits, n): values[bits] for bits in range(1, 1 << n)}
    return CumulantVector(f.order, n, entries)


def mobius_forward_naive(g: CumulantVector) -> CumulantVector:
    """O(3^n) double loop over subset/superset pairs; oracle for tests."""
    _check_full_lattice(g)
    n = g.n
    entries = {}
    for P in all_nonempty_sets(n):
        total = 0
        for Q, v in g.entries.items():
            if Q.superset_of(P):
                total = total + v
        entries[P] = total
    return CumulantVector(g.order, n, entries)


def mobius_inverse_naive(f: CumulantVector) -> CumulantVector:
    """O(3^n) alternating-sign superset sum; oracle for tests."""
    _check_full_lattice(f)
    n = f.n
    entries = {}
    for P in all_nonempty_sets(n):
        total = 0
        for Q, v in f.entries.items():
            if Q.superset_of(P):
                sign = -1 if (Q.card() - P.card()) % 2 else 1
                total = total + sign * v
        entries[P] = total
    return CumulantVector(f.order, n, entries)


def inversion_matrix(domain: Sequence[PathSet]) -> np.ndarray:
    """Matrix X with X[P, Q] = (-1)^(|Q|-|P|) if Q >= P else 0.

    Applied to a vector of superset sums indexed by `domain`, X recovers the
    underlying values on the same index set (when the vector's support lies
    within the domain).
    """
    if len(set(domain)) != len(domain):
        raise ValueError("domain contains duplicate sets")
    if any(P.is_empty() for P in domain):
        raise ValueError("domain must not contain the empty set")
    size = len(domain)
    X = np.zeros((size, size), dtype=np.int64)
    for r, P in enumerate(domain):
        for c, Q in enumerate(domain):
            if Q.superset_of(P):
                X[r, c] = -1 if (Q.card() - P.card()) % 2 else 1
    return X


def zeta_matrix(domain: Sequence[PathSet]) -> np.ndarray:
    """Matrix Z with Z[P, Q] = 1 iff Q >= P; the inverse of inversion_matrix."""
    size = len(domain)
    Z = np.zeros((size, size), dtype=np.int64)
    for r, P in enumerate(domain):
        for c, Q in enumerate(domain):
            if Q.superset_of(P):
                Z[r, c] = 1
    return Z


@dataclass
class ModifiedInversion:
    """Restricted inversion matrix with the large-set correction terms.

    `rows` index the recoverable entries (support-estimate sets of size at
    most s); `cols` index the required superset-sum entries (support-estimate
    sets of size at most s, plus the antichain members above s).
    """

    rows: list[PathSet]
    cols: list[PathSet]
    matrix: np.ndarray


def _check_antichain(sets: Sequence[PathSet]) -> None:
    for A in sets:
        for B in sets:
            if A != B and A.subset_of(B):
                raise ValueError(
                    f"bounding topology must be an antichain: {A} is contained in {B}"
                )


def modified_inversion_matrix(
    support_estimate: Sequence[PathSet],
    antichain: Sequence[PathSet],
    s: int,
) -> ModifiedInversion:
    """Inversion restricted to small sets, correcting through the antichain.

    For vectors whose underlying values vanish outside the support estimate
    and on sets larger than s that are not antichain members, the product
    of this matrix with the restricted superset-sum vector reproduces the
    full-lattice inversion on every row. Each antichain member B with
    |B| > s contributes the closed-form correction column
    -(-1)^(s-|P|) * C(|B|-|P|-1, s-|P|); members with |B| <= s carry only
    their standard alternating coefficient.
    """
    if s < 1:
        raise ValueError("size threshold s must be positive")
    _check_antichain(antichain)
    anti = sorted(set(antichain), key=lambda p: (p.card(), p.bits))
    small = sorted(
        {P for P in support_estimate if P.card() <= s},
        key=lambda p: (p.card(), p.bits),
    )
    large_anti = [B for B in anti if B.card() > s]
    small_set = set(small)
    cols = small + [B for B in large_anti if B not in small_set]
    col_index = {P: c for c, P in enumerate(cols)}
    X = np.zeros((len(small), len(cols)), dtype=np.int64)
    for r, P in enumerate(small):
        for Q in small:
            if Q.superset_of(P):
                X[r, col_index[Q]] += -1 if (Q.card() - P.card()) % 2 else 1
        for B in large_anti:
            if B.superset_of(P):
                sign = -1 if (s - P.card()) % 2 else 1
                coeff = -sign * math.comb(B.card() - P.card() - 1, s - P.card())
                X[r, col_index[B]] += coeff
    return ModifiedInversion(rows=small, cols=cols, matrix=X)
