"""Hypothesis classes, data distributions, samples and losses.

Inputs of a finite class are the integers ``0..m-1``; hypotheses are rows of a
binary label matrix. Real-valued inputs (threshold and halfspace experiments)
are floats or tuples of floats and never mix with domain indices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence, Union

import numpy as np

Input = Union[int, float, tuple]
Weight = Union[Fraction, float]


class Example(NamedTuple):
    x: Input
    y: int


Sample = tuple  # tuple[Example, ...]


def as_sample(items: Iterable) -> Sample:
    """Coerce ``(x, y)`` pairs into a sample, validating labels."""
    out = []
    for x, y in items:
        if y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {y!r}")
        if isinstance(x, list):
            x = tuple(float(v) for v in x)
        out.append(Example(x, int(y)))
    return tuple(out)


# ---------------------------------------------------------------------------
# seeding

_MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    value = (value + 0x9E3779B97F4A7C15) & _MASK64
    value = ((value ^ (value >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    value = ((value ^ (value >> 27)) * 0x94D049BB133111EB) & _MASK64
    return value ^ (value >> 31)


def derive_seed(root: int, index: int) -> int:
    """Counter-based child seed: draw ``index`` never depends on other draws."""
    return splitmix64((splitmix64(root & _MASK64) + index) & _MASK64)


# ---------------------------------------------------------------------------
# finite classes


@dataclass(frozen=True, eq=False)
class FiniteClass:
    """A finite class of binary hypotheses over the domain ``0..m-1``.

    Rows of ``labels`` are hypotheses. Extensionally equal rows are merged on
    construction, keeping the first occurrence (and its name).
    """

    labels: np.ndarray
    names: tuple | None = None

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError("labels must be a 2-D matrix (hypotheses x inputs)")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("labels must be binary")
        if self.names is not None and len(self.names) != arr.shape[0]:
            raise ValueError("names must match the number of hypotheses")
        seen: dict[bytes, int] = {}
        keep = []
        for i, row in enumerate(arr):
            key = row.tobytes()
            if key not in seen:
                seen[key] = i
                keep.append(i)
        arr = np.ascontiguousarray(arr[keep])
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names[i] for i in keep))

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def domain_size(self) -> int:
        return self.labels.shape[1]

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"FiniteClass(size={self.size}, domain_size={self.domain_size})"

    def name(self, h: int) -> str:
        return self.names[h] if self.names is not None else f"h{h}"

    def index_of(self, name: str) -> int:
        if self.names is None:
            raise KeyError(name)
        return self.names.index(name)

    def restrict(self, inputs: Sequence[int]) -> np.ndarray:
        """Label matrix restricted to ``inputs`` (columns may repeat)."""
        idx = np.asarray(list(inputs), dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.domain_size):
            raise IndexError("input outside the class domain")
        return self.labels[:, idx]

    @cached_property
    def consistency_masks(self) -> tuple:
        """``masks[y][x]``: bitmask of hypotheses that label input ``x`` with ``y``."""
        masks = ([0] * self.domain_size, [0] * self.domain_size)
        for h, row in enumerate(self.labels):
            bit = 1 << h
            for x, y in enumerate(row):
                masks[int(y)][x] |= bit
        return masks

    @property
    def full_mask(self) -> int:
        return (1 << self.size) - 1

    def to_json(self) -> dict:
        doc = {"domain": self.domain_size, "hypotheses": self.labels.tolist()}
        if self.names is not None:
            doc["names"] = list(self.names)
        return doc


def thresholds(m: int) -> FiniteClass:
    """Thresholds ``1[x >= t]`` on inputs ``0..m-1`` for ``t = 0..m`` (``t = m`` is all-zero)."""
    rows = [[int(x >= t) for x in range(m)] for t in range(m + 1)]
    return FiniteClass(np.array(rows).reshape(m + 1, m), tuple(f"1[x>={t}]" for t in range(m + 1)))


def point_functions(m: int) -> FiniteClass:
    """Zero function (index 0) plus point functions; hypothesis ``t`` is ``1[x = t-1]``."""
    rows = np.zeros((m + 1, m), dtype=np.uint8)
    for t in range(1, m + 1):
        rows[t, t - 1] = 1
    return FiniteClass(rows, ("zero",) + tuple(f"1[x={t - 1}]" for t in range(1, m + 1)))


def full_class(m: int) -> FiniteClass:
    """All ``2^m`` labelings, row ``k`` being the binary expansion of ``k``."""
    rows = [[(k >> x) & 1 for x in range(m)] for k in range(2**m)]
    return FiniteClass(np.array(rows, dtype=np.uint8).reshape(2**m, m))


def evaluate(cls: FiniteClass, h: int, x: int) -> int:
    if not (0 <= h < cls.size and 0 <= x < cls.domain_size):
        raise IndexError(f"hypothesis {h} / input {x} out of range")
    return int(cls.labels[h, x])


def hypothesis(cls: FiniteClass, h: int) -> Callable[[int], int]:
    row = cls.labels[h]
    return lambda x: int(row[x])


def _check_domain(s: Sample, cls: FiniteClass) -> None:
    for ex in s:
        if not isinstance(ex.x, (int, np.integer)) or not 0 <= ex.x < cls.domain_size:
            raise IndexError(f"input {ex.x!r} outside the class domain")


def consistent_mask(cls: FiniteClass, s: Sample) -> int:
    """Bitmask of hypotheses with zero empirical risk on ``s``."""
    _check_domain(s, cls)
    masks = cls.consistency_masks
    acc = cls.full_mask
    for x, y in s:
        acc &= masks[y][x]
    return acc


def consistent_hypotheses(cls: FiniteClass, s: Sample) -> list:
    acc = consistent_mask(cls, s)
    return [h for h in range(cls.size) if acc >> h & 1]


def realizing_hypothesis(cls: FiniteClass, s: Sample) -> int | None:
    acc = consistent_mask(cls, s)
    if acc == 0:
        return None
    return (acc & -acc).bit_length() - 1


def is_realizable(s: Sample, cls: FiniteClass) -> bool:
    return consistent_mask(cls, s) != 0


def empirical_risk(predict: Callable, s: Sample) -> Fraction:
    if not s:
        raise ValueError("empirical risk of an empty sample is undefined")
    return Fraction(sum(int(predict(x) != y) for x, y in s), len(s))


# ---------------------------------------------------------------------------
# halfspaces and continuous distributions


@dataclass(frozen=True)
class Halfspace:
    w: tuple
    b: float

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(self.w))
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        if all(v == 0.0 for v in w) and self.b == 0.0:
            raise ValueError("halfspace needs (w, b) != (0, 0)")

    @property
    def dim(self) -> int:
        return len(self.w)

    def score(self, x) -> float:
        return float(np.dot(self.w, np.atleast_1d(x))) + self.b

    def __call__(self, x) -> int:
        return int(self.score(x) >= 0.0)

    def distance(self, x) -> float:
        norm = math.hypot(*self.w)
        return abs(self.score(x)) / norm if norm else math.inf


@dataclass(frozen=True)
class ContinuousSpec:
    """Atomless data source with a realizable target.

    ``uniform-interval``: ``x ~ U[low, high]`` labelled by ``1[x >= threshold]``.
    ``uniform-box``: ``x ~ U[low, high]^d`` labelled by ``halfspace``.
    Points closer than ``margin`` to the decision boundary are rejected.
    """

    family: str
    low: float = 0.0
    high: float = 1.0
    threshold: float | None = None
    halfspace: Halfspace | None = None
    margin: float = 0.0

    def __post_init__(self):
        if self.family == "uniform-interval":
            if self.threshold is None:
                raise ValueError("uniform-interval needs a threshold target")
        elif self.family == "uniform-box":
            if self.halfspace is None:
                raise ValueError("uniform-box needs a halfspace target")
            if not 1 <= self.halfspace.dim <= 3:
                raise ValueError("uniform-box supports dimension 1..3")
        else:
            raise ValueError(f"unknown family {self.family!r}")
        if self.high <= self.low or self.margin < 0:
            raise ValueError("bad interval or margin")

    def target(self, x) -> int:
        if self.family == "uniform-interval":
            return int(x >= self.threshold)
        return self.halfspace(x)

    def _draw(self, rng: np.random.Generator, n: int) -> Sample:
        out: list = []
        while len(out) < n:
            if self.family == "uniform-interval":
                x = float(rng.uniform(self.low, self.high))
                if self.margin and abs(x - self.threshold) < self.margin:
                    continue
            else:
                x = tuple(float(v) for v in rng.uniform(self.low, self.high, self.halfspace.dim))
                if self.margin and self.halfspace.distance(x) < self.margin:
                    continue
            out.append(Example(x, self.target(x)))
        return tuple(out)


@dataclass(frozen=True)
class FiniteDistribution:
    """Finitely supported distribution over labelled examples."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((Example(*ex), w) for ex, w in self.atoms)
        if not atoms:
            raise ValueError("distribution needs at least one atom")
        if any(w <= 0 for _, w in atoms):
            raise ValueError("atom weights must be strictly positive")
        total = sum(w for _, w in atoms)
        if abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {float(total)!r}, not 1")
        object.__setattr__(self, "atoms", atoms)

    @property
    def examples(self) -> tuple:
        return tuple(ex for ex, _ in self.atoms)

    @cached_property
    def probabilities(self) -> np.ndarray:
        p = np.array([float(w) for _, w in self.atoms])
        return p / p.sum()

    def _draw(self, rng: np.random.Generator, n: int) -> Sample:
        if n == 0:
            return ()
        idx = rng.choice(len(self.atoms), size=n, p=self.probabilities)
        return tuple(self.atoms[i][0] for i in idx)

    def is_realizable_by(self, cls: FiniteClass) -> bool:
        return is_realizable(self.examples, cls)


def uniform_over_domain(cls: FiniteClass, target: int, inputs: Sequence[int] | None = None) -> FiniteDistribution:
    """Uniform distribution over ``inputs`` (default: whole domain) labelled by hypothesis ``target``."""
    inputs = list(range(cls.domain_size)) if inputs is None else list(inputs)
    w = Fraction(1, len(inputs))
    return FiniteDistribution(tuple((Example(x, evaluate(cls, target, x)), w) for x in inputs))


Distribution = Union[FiniteDistribution, ContinuousSpec]


def draw_sample(dist: Distribution, n: int, seed: int | np.random.Generator) -> Sample:
    """``n`` i.i.d. examples; a fixed integer seed always yields the same sample."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed & _MASK64)
    return dist._draw(rng, n)


def risk(predict: Callable, dist: FiniteDistribution) -> Weight:
    """Exact risk over a finite support; rational when the weights are."""
    return sum((w for ex, w in dist.atoms if predict(ex.x) != ex.y), start=type(dist.atoms[0][1])(0))


# ---------------------------------------------------------------------------
# JSON documents


def _load_doc(doc_or_path) -> dict:
    if isinstance(doc_or_path, dict):
        return doc_or_path
    return json.loads(Path(doc_or_path).read_text())


def _parse_weight(w) -> Weight:
    if isinstance(w, str):
        return Fraction(w)
    if isinstance(w, int):
        return Fraction(w)
    return float(w)


def load_class(doc_or_path) -> FiniteClass:
    """Class from ``{"domain": m, "hypotheses": [[...], ...]}`` or a named family."""
    doc = _load_doc(doc_or_path)
    family = doc.get("family")
    if family == "thresholds":
        return thresholds(int(doc["domain"]))
    if family == "point-functions":
        return point_functions(int(doc["domain"]))
    if family == "full":
        return full_class(int(doc["domain"]))
    if family is not None:
        raise ValueError(f"unknown class family {family!r}")
    m = int(doc["domain"])
    rows = np.array(doc["hypotheses"], dtype=np.uint8).reshape(-1, m)
    return FiniteClass(rows, tuple(doc["names"]) if "names" in doc else None)


def load_distribution(doc_or_path, cls: FiniteClass | None = None) -> Distribution:
    """Distribution from ``{"atoms": [[x, y, weight], ...]}`` or a named family.

    Families: ``uniform-interval`` / ``uniform-box`` (continuous) and
    ``uniform-domain`` (uniform over a finite class domain with a target row).
    """
    doc = _load_doc(doc_or_path)
    if "atoms" in doc:
        atoms = []
        for x, y, w in doc["atoms"]:
            if isinstance(x, list):
                x = tuple(float(v) for v in x)
            atoms.append((Example(x, int(y)), _parse_weight(w)))
        return FiniteDistribution(tuple(atoms))
    family = doc.get("family")
    if family == "uniform-interval":
        return ContinuousSpec(
            "uniform-interval",
            low=float(doc.get("low", 0.0)),
            high=float(doc.get("high", 1.0)),
            threshold=float(doc["threshold"]),
            margin=float(doc.get("margin", 0.0)),
        )
    if family == "uniform-box":
        return ContinuousSpec(
            "uniform-box",
            low=float(doc.get("low", -1.0)),
            high=float(doc.get("high", 1.0)),
            halfspace=Halfspace(tuple(doc["w"]), float(doc.get("b", 0.0))),
            margin=float(doc.get("margin", 0.0)),
        )
    if family == "uniform-domain":
        if cls is None:
            raise ValueError("uniform-domain needs a finite class")
        return uniform_over_domain(cls, int(doc.get("target", 0)), doc.get("inputs"))
    raise ValueError(f"unknown distribution spec {doc!r}")
