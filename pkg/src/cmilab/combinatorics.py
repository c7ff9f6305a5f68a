"""Brute-force combinatorial measures of finite classes.

Everything here is exhaustive; callers keep domains and samples small.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np

from .core import FiniteClass, Sample, consistent_mask, is_realizable


def _patterns(cls: FiniteClass, inputs: Sequence[int]) -> set:
    sub = cls.restrict(inputs)
    return {row.tobytes() for row in sub}


def growth_count(cls: FiniteClass, inputs: Sequence[int]) -> int:
    """Number of distinct labelings the class induces on ``inputs``."""
    if len(inputs) == 0:
        return 1 if cls.size else 0
    return len(_patterns(cls, inputs))


def shatters(cls: FiniteClass, inputs: Sequence[int]) -> bool:
    return growth_count(cls, inputs) == 2 ** len(inputs)


def vc_dimension(cls: FiniteClass) -> int:
    if cls.size == 0:
        raise ValueError("empty class")
    d = 0
    for m in range(1, cls.domain_size + 1):
        if 2**m > cls.size:
            break
        if any(shatters(cls, c) for c in combinations(range(cls.domain_size), m)):
            d = m
        else:
            break
    return d


class StarNumber(NamedTuple):
    value: int
    capped: bool  # True means "at least value"

    def __str__(self) -> str:
        return f">={self.value}" if self.capped else str(self.value)


def _has_star(cls: FiniteClass, inputs: tuple) -> bool:
    sub = cls.restrict(inputs)
    pats = {row.tobytes() for row in sub}
    k = len(inputs)
    for row in np.unique(sub, axis=0):
        ok = True
        for i in range(k):
            nb = row.copy()
            nb[i] ^= 1
            if nb.tobytes() not in pats:
                ok = False
                break
        if ok:
            return True
    return False


def star_set(cls: FiniteClass, size: int) -> tuple | None:
    """First input set (lexicographic) of the given size carrying a star, if any."""
    for c in combinations(range(cls.domain_size), size):
        if _has_star(cls, c):
            return c
    return None


def star_number(cls: FiniteClass, cap: int = 12) -> StarNumber:
    """Largest length of a realizable sequence of distinct inputs whose every
    single-flip neighbour is realizable.

    Stars are hereditary (restricting a star to a subset is again a star), so
    the search stops at the first size with no star.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    s = 0
    for k in range(1, min(cap, cls.domain_size) + 1):
        if star_set(cls, k) is None:
            return StarNumber(s, False)
        s = k
    return StarNumber(s, s == cap and cls.domain_size > cap)


@dataclass(frozen=True)
class VersionSpace:
    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(sorted(set(int(h) for h in self.members))))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, h) -> bool:
        return h in self.members

    def issubset(self, other: "VersionSpace") -> bool:
        return set(self.members) <= set(other.members)

    @classmethod
    def from_mask(cls, mask: int) -> "VersionSpace":
        out = []
        h = 0
        while mask:
            if mask & 1:
                out.append(h)
            mask >>= 1
            h += 1
        return cls(tuple(out))


def version_space(cls: FiniteClass, s: Sample) -> VersionSpace:
    return VersionSpace.from_mask(consistent_mask(cls, s))


class TeachingSet(NamedTuple):
    indices: tuple  # positions into the sample


def empirical_teaching_set(cls: FiniteClass, s: Sample) -> TeachingSet:
    """Smallest sub-sample with the same version space; lexicographic ties."""
    if not is_realizable(s, cls):
        raise ValueError("sample is not realizable by the class")
    target = consistent_mask(cls, s)
    for k in range(len(s) + 1):
        for idx in combinations(range(len(s)), k):
            if consistent_mask(cls, tuple(s[i] for i in idx)) == target:
                return TeachingSet(idx)
    raise AssertionError("unreachable: the full sample is a teaching set")


def disagreement_region(vs: VersionSpace, cls: FiniteClass) -> set:
    if len(vs) == 0:
        raise ValueError("empty version space")
    rows = cls.labels[list(vs.members)]
    return {int(x) for x in np.flatnonzero(rows.min(axis=0) != rows.max(axis=0))}
