"""Learning algorithms as interchangeable ``Learner`` objects.

A learner maps a labelled sample to a finite distribution over hashable
outputs (``dict[output, probability]``). Deterministic learners return a
point mass. Transductive learners also receive the inputs they will be
evaluated on; randomized transductive learners expose independent per-input
prediction probabilities through ``predict_proba`` instead of enumerating
their exponentially large output distribution.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Any, Callable, Sequence

import numpy as np

from .combinatorics import VersionSpace
from .core import Example, FiniteClass, Sample, consistent_mask

# ---------------------------------------------------------------------------
# outputs


@dataclass(frozen=True)
class HypothesisOut:
    index: int
    cls: FiniteClass = field(compare=False, repr=False)

    def __call__(self, x) -> int:
        return int(self.cls.labels[self.index, x])


@dataclass(frozen=True)
class ThresholdOut:
    """Predicts ``1[x >= position]``; ``position = inf`` is the all-zero rule."""

    position: float

    def __call__(self, x) -> int:
        return int(x >= self.position)


def _round_sig(v: float, digits: int = 12) -> float:
    if abs(v) < 1e-12:
        return 0.0
    return float(f"{v:.{digits}g}")


@dataclass(frozen=True)
class HalfspaceOut:
    """Canonical halfspace ``1[<w, x> + b >= 0]``.

    Built through :meth:`canonical`: ``w`` scaled to unit norm (positive
    scaling only, so orientation is kept) and every coordinate rounded to 12
    significant digits. Constant rules have ``w = 0`` and ``b = +-1``.
    """

    w: tuple
    b: float

    @classmethod
    def canonical(cls, w, b) -> "HalfspaceOut":
        w = np.asarray(w, dtype=float)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            if b == 0.0:
                raise ValueError("degenerate halfspace")
            return cls(tuple(0.0 for _ in w), 1.0 if b > 0 else -1.0)
        return cls(tuple(_round_sig(v / norm) for v in w), _round_sig(b / norm))

    def __call__(self, x) -> int:
        return int(float(np.dot(self.w, np.atleast_1d(x))) + self.b >= 0.0)


@dataclass(frozen=True)
class VersionSpaceOut:
    vs: VersionSpace

    def __call__(self, x):
        raise TypeError("a released version space is not a classifier")


@dataclass(frozen=True)
class PredictionVector:
    """Labels over an explicit list of evaluation inputs (improper outputs)."""

    labels: tuple


def prediction_table(output, z) -> np.ndarray:
    """2 x n predicted labels of ``output`` on a supersample."""
    n = z.n
    if isinstance(output, PredictionVector):
        return np.asarray(output.labels, dtype=np.uint8).reshape(2, n)
    return np.array([[output(ex.x) for ex in row] for row in z.rows], dtype=np.uint8).reshape(2, n)


# ---------------------------------------------------------------------------
# learner base


class Learner:
    """Base class. Subclasses implement :meth:`train`."""

    name = "learner"
    consistent = True
    proper = True
    transductive = False
    randomized = False

    def train(self, s: Sample, eval_inputs: Sequence | None = None) -> dict:
        raise NotImplementedError

    def predict_proba(self, s: Sample, eval_inputs: Sequence) -> np.ndarray:
        """P(label = 1) per evaluation input; product-form learners only."""
        raise NotImplementedError

    def selection_outputs(self, z):
        """Optional vectorized path: ``(codes, decode)`` for every selection.

        ``codes[k]`` identifies the output trained on ``Z_u`` where bit ``j`` of
        ``k`` is ``u_j``; ``decode(code)`` rebuilds the output. ``None`` means
        the caller should train once per selection.
        """
        return None

    def selection_loss_proba(self, z):
        """Optional vectorized path for product-form learners.

        Returns a ``2**n x 2n`` array of P(loss = 1) per selection and cell
        (cells in row-major order), or ``None``.
        """
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


def _point_mass(out) -> dict:
    return {out: 1.0}


def _double_over_selections(cells0, cells1, start, op) -> np.ndarray:
    """Reduce ``op`` over columns for every selection vector (bit j = u_j)."""
    acc = np.array([start], dtype=cells0.dtype)
    for a0, a1 in zip(cells0, cells1):
        acc = np.concatenate([op(acc, a0), op(acc, a1)])
    return acc


class ConstantLearner(Learner):
    """Ignores its sample; used as a zero-information control."""

    name = "constant"
    consistent = False

    def __init__(self, output: Any = ThresholdOut(math.inf)):
        self.output = output

    def train(self, s, eval_inputs=None):
        return _point_mass(self.output)


class FirstExampleLearner(Learner):
    """Outputs its first training example verbatim (reveals ``U_1`` on distinct supersamples)."""

    name = "first-example"
    consistent = False
    proper = False

    def train(self, s, eval_inputs=None):
        return _point_mass(s[0] if s else None)


# ---------------------------------------------------------------------------
# thresholds on the real line


def _threshold_bounds(s: Sample) -> tuple:
    hi = min((x for x, y in s if y == 1), default=math.inf)
    lo = max((x for x, y in s if y == 0), default=-math.inf)
    if lo >= hi:
        raise ValueError("sample is not realizable by thresholds")
    return lo, hi


def threshold_learner(s: Sample) -> ThresholdOut:
    """Threshold at the smallest positive training input (``inf`` if none)."""
    _, hi = _threshold_bounds(s)
    return ThresholdOut(hi)


class ThresholdLearner(Learner):
    name = "threshold"

    def train(self, s, eval_inputs=None):
        return _point_mass(threshold_learner(s))

    def selection_outputs(self, z):
        cells = np.array([[ex.x if ex.y == 1 else math.inf for ex in row] for row in z.rows], dtype=float)
        codes = _double_over_selections(cells[0], cells[1], math.inf, np.minimum)
        return codes, ThresholdOut


LEAK_OFFSET = 1.0
_LEAK_BITS = 28
_LEAK_SCALE = 2.0**-10


def _sample_code(s: Sample) -> int:
    h = hashlib.blake2b(digest_size=8)
    for x, y in sorted(s):
        h.update(struct.pack("<dB", float(x), y))
    return int.from_bytes(h.digest(), "little") >> (64 - _LEAK_BITS)


def leaking_erm(s: Sample, offset: float = LEAK_OFFSET) -> ThresholdOut:
    """Consistent threshold that memorizes its training set.

    The position is the smallest positive training input (or the largest
    negative one plus ``offset``), nudged inside the consistent interval by a
    perturbation of relative size below 2^-10 that encodes a 28-bit digest of
    the sorted sample. On atomless data distinct training sets thus give
    distinct thresholds.
    """
    lo, hi = _threshold_bounds(s)
    if not s:
        return ThresholdOut(math.inf)
    frac = _sample_code(s) / 2.0**_LEAK_BITS
    if math.isfinite(hi):
        gap = min(hi - lo, offset)
        t = hi - gap * _LEAK_SCALE * frac
        if not lo < t <= hi:
            t = hi
    else:
        t = lo + offset + offset * _LEAK_SCALE * frac
    return ThresholdOut(t)


class LeakingERM(Learner):
    name = "leaking-erm"

    def __init__(self, offset: float = LEAK_OFFSET):
        self.offset = offset

    def train(self, s, eval_inputs=None):
        return _point_mass(leaking_erm(s, self.offset))


# ---------------------------------------------------------------------------
# hard-margin SVM

_FEAS_TOL = 1e-9


def _svm_points(s: Sample):
    label_of: dict = {}
    original: dict = {}
    for x, y in s:
        key = tuple(float(v) for v in np.atleast_1d(x))
        original.setdefault(key, x)
        if label_of.setdefault(key, y) != y:
            raise ValueError("duplicate input with conflicting labels (zero margin)")
    keys = sorted(label_of)
    if not keys:
        raise ValueError("empty sample")
    dims = {len(k) for k in keys}
    if len(dims) != 1:
        raise ValueError("inputs of mixed dimension")
    X = np.array(keys, dtype=float)
    sgn = np.array([2 * label_of[k] - 1 for k in keys], dtype=float)
    return [original[k] for k in keys], X, sgn


def _solve_active(X, sgn, subsets):
    """Max-margin separator of each subset assuming all its points are tight."""
    subsets = np.asarray(subsets)
    k = subsets.shape[1]
    Xs = X[subsets]  # (K, k, d)
    ss = sgn[subsets]  # (K, k)
    G = np.einsum("kid,kjd->kij", Xs, Xs)
    M = np.zeros((len(subsets), k + 1, k + 1))
    M[:, :k, :k] = ss[:, :, None] * ss[:, None, :] * G
    M[:, :k, k] = ss
    M[:, k, :k] = ss
    rhs = np.zeros((len(subsets), k + 1))
    rhs[:, :k] = 1.0
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-12
    sol = np.full((len(subsets), k + 1), np.nan)
    if ok.any():
        sol[ok] = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    alpha, b = sol[:, :k], sol[:, k]
    good = ok & (alpha >= -1e-12).all(axis=1)
    W = np.einsum("ki,kid->kd", np.nan_to_num(alpha) * ss, Xs)
    return W, np.nan_to_num(b), good


def _feasible(X, sgn, W, B):
    margins = sgn[:, None] * (X @ W.T + B[None, :])
    return (margins >= 1.0 - _FEAS_TOL).all(axis=0)


def svm_fit(s: Sample) -> tuple:
    """Hard-margin SVM by support-set enumeration.

    Returns ``(output, support)`` where ``support`` is the sorted tuple of
    support examples (at most ``d + 1``). Candidate subsets of increasing size
    are solved in closed form; the first size with a globally feasible
    candidate holds the optimum, since each subset problem relaxes the full one.
    """
    keys, X, sgn = _svm_points(s)
    d = X.shape[1]
    if (sgn > 0).all() or (sgn < 0).all():
        lab = int(sgn[0] > 0)
        return HalfspaceOut.canonical(np.zeros(d), 1.0 if lab else -1.0), (Example(keys[0], lab),)
    pos = np.flatnonzero(sgn > 0)
    neg = np.flatnonzero(sgn < 0)
    pairs = np.array([(i, j) for i in pos for j in neg])
    diff = X[pairs[:, 0]] - X[pairs[:, 1]]
    sq = (diff**2).sum(axis=1)
    W = 2.0 * diff / sq[:, None]
    B = -np.einsum("kd,kd->k", W, (X[pairs[:, 0]] + X[pairs[:, 1]]) / 2.0)
    feas = _feasible(X, sgn, W, B)
    subsets = pairs
    if not feas.any():
        feas = None
        for k in range(3, d + 2):
            subs = [c for c in combinations(range(len(keys)), k) if 0 < (sgn[list(c)] > 0).sum() < k]
            if not subs:
                continue
            W, B, good = _solve_active(X, sgn, subs)
            f = good & _feasible(X, sgn, W, B)
            if f.any():
                feas, subsets = f, np.asarray(subs)
                break
        if feas is None:
            raise ValueError("sample is not linearly separable with positive margin")
    cand = np.flatnonzero(feas)
    norms = np.einsum("kd,kd->k", W[cand], W[cand])
    best = cand[int(np.argmin(norms))]
    w, b = W[best], B[best]
    support = tuple(
        Example(keys[i], int(sgn[i] > 0)) for i in sorted(subsets[best])
    )
    return HalfspaceOut.canonical(w, b), support


def svm_max_margin(s: Sample) -> HalfspaceOut:
    return svm_fit(s)[0]


def margin_of(output: HalfspaceOut, s: Sample) -> float:
    """Geometric margin of a canonical halfspace on ``s`` (negative if misclassified)."""
    w = np.asarray(output.w)
    vals = []
    for x, y in s:
        score = float(np.dot(w, np.atleast_1d(x))) + output.b
        vals.append(score if y == 1 else -score)
    return min(vals)


class SVMLearner(Learner):
    name = "svm"

    def train(self, s, eval_inputs=None):
        return _point_mass(svm_max_margin(s))


# ---------------------------------------------------------------------------
# compression schemes


@dataclass(frozen=True)
class CompressionScheme:
    name: str
    compress: Callable[[Sample], Sample]
    reconstruct: Callable[[Sample], Any]
    size: int

    def __call__(self, s: Sample):
        return self.reconstruct(self.compress(s))


def threshold_scheme() -> CompressionScheme:
    def compress(s):
        _, hi = _threshold_bounds(s)
        return () if math.isinf(hi) else (Example(hi, 1),)

    def reconstruct(c):
        return ThresholdOut(min((x for x, y in c if y == 1), default=math.inf))

    return CompressionScheme("threshold", compress, reconstruct, 1)


def svm_scheme(d: int) -> CompressionScheme:
    return CompressionScheme("svm", lambda s: svm_fit(s)[1], svm_max_margin, d + 1)


def first_element_scheme() -> CompressionScheme:
    """Order-dependent control: keeps the first example, predicts its label everywhere."""

    def reconstruct(c):
        return ConstantRule(c[0].y if c else 0)

    return CompressionScheme("first-element", lambda s: tuple(s[:1]), reconstruct, 1)


@dataclass(frozen=True)
class ConstantRule:
    label: int

    def __call__(self, x) -> int:
        return self.label


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    exhaustive: bool
    checked: int
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.stable


def _multiset_key(c: Sample) -> tuple:
    return tuple(sorted(c, key=repr))


def check_stability(
    scheme: CompressionScheme,
    s: Sample,
    exhaustive_limit: int = 12,
    samples: int = 4096,
    seed: int = 0,
) -> StabilityResult:
    """Check symmetry of the compression map and the sandwich property.

    Every ``s'`` with ``compress(s) <= s' <= s`` (as multisets) must reconstruct
    the same output; each ``s'`` is tried in its original and reversed order.
    Exhaustive when at most ``exhaustive_limit`` points are free, sampled
    otherwise.
    """
    rng = np.random.default_rng(seed)
    c = scheme.compress(s)
    ref = scheme.reconstruct(c)
    checked = 0

    # symmetry of compress under permutations of s
    if len(s) <= 6:
        perms = list(permutations(range(len(s))))
    else:
        perms = [tuple(rng.permutation(len(s))) for _ in range(64)] + [tuple(range(len(s) - 1, -1, -1))]
    ref_key = _multiset_key(c)
    for p in perms:
        checked += 1
        if _multiset_key(scheme.compress(tuple(s[i] for i in p))) != ref_key:
            return StabilityResult(False, len(s) <= 6, checked, tuple(s[i] for i in p))

    # positions of the compression multiset inside s
    remaining = list(range(len(s)))
    kept = []
    for ex in c:
        for i in remaining:
            if s[i] == ex:
                kept.append(i)
                remaining.remove(i)
                break
        else:
            raise ValueError("compression set is not a sub-multiset of the sample")
    free = remaining
    exhaustive = len(free) <= exhaustive_limit
    if exhaustive:
        masks = range(2 ** len(free))
    else:
        masks = (int(v) for v in rng.integers(0, 2 ** min(len(free), 62), size=samples))
    for mask in masks:
        chosen = sorted(kept + [free[i] for i in range(len(free)) if mask >> i & 1])
        sub = tuple(s[i] for i in chosen)
        for order in (sub, sub[::-1]):
            checked += 1
            if scheme(order) != ref:
                return StabilityResult(False, exhaustive, checked, order)
    return StabilityResult(True, exhaustive, checked)


# ---------------------------------------------------------------------------
# finite-class learners


def _lowest_bit(mask: int) -> int:
    return (mask & -mask).bit_length() - 1


def least_element_erm(cls: FiniteClass, s: Sample) -> HypothesisOut:
    """Smallest hypothesis index in the version space."""
    mask = consistent_mask(cls, s)
    if mask == 0:
        raise ValueError("empty version space: sample not realizable")
    return HypothesisOut(_lowest_bit(mask), cls)


def _selection_masks(cls: FiniteClass, z) -> np.ndarray:
    masks = cls.consistency_masks
    dtype = np.uint64 if cls.size <= 63 else object
    cells = [np.array([masks[ex.y][ex.x] for ex in row], dtype=dtype) for row in z.rows]
    return _double_over_selections(cells[0], cells[1], dtype(cls.full_mask) if dtype is np.uint64 else cls.full_mask, np.bitwise_and)


class LeastElementERM(Learner):
    name = "least-erm"

    def __init__(self, cls: FiniteClass):
        self.cls = cls

    def train(self, s, eval_inputs=None):
        return _point_mass(least_element_erm(self.cls, s))

    def selection_outputs(self, z):
        acc = _selection_masks(self.cls, z)
        if (acc == 0).any():
            raise ValueError("empty version space: sample not realizable")
        if acc.dtype == np.uint64:
            low = acc & (~acc + np.uint64(1))
            codes = np.log2(low.astype(np.float64)).astype(np.int64)
        else:
            codes = np.array([_lowest_bit(int(a)) for a in acc], dtype=np.int64)
        cls = self.cls
        return codes, lambda c: HypothesisOut(int(c), cls)

    def __repr__(self):
        return f"LeastElementERM({self.cls!r})"


def version_space_releaser(cls: FiniteClass, s: Sample) -> VersionSpaceOut:
    return VersionSpaceOut(VersionSpace.from_mask(consistent_mask(cls, s)))


class VersionSpaceReleaser(Learner):
    name = "version-space"

    def __init__(self, cls: FiniteClass):
        self.cls = cls

    def train(self, s, eval_inputs=None):
        return _point_mass(version_space_releaser(self.cls, s))

    def selection_outputs(self, z):
        acc = _selection_masks(self.cls, z)
        return acc, lambda c: VersionSpaceOut(VersionSpace.from_mask(int(c)))

    def __repr__(self):
        return f"VersionSpaceReleaser({self.cls!r})"


# ---------------------------------------------------------------------------
# improper controls


def _training_labels(s: Sample) -> dict:
    seen: dict = {}
    for x, y in s:
        if seen.setdefault(x, y) != y:
            raise ValueError(f"contradictory labels for input {x!r}")
    return seen


def predict_one_improper(s: Sample, eval_inputs: Sequence) -> PredictionVector:
    """Training inputs keep their label; every other input is labelled 1."""
    seen = _training_labels(s)
    return PredictionVector(tuple(seen.get(x, 1) for x in eval_inputs))


class PredictOne(Learner):
    name = "predict-one"
    proper = False
    transductive = True

    def train(self, s, eval_inputs=None):
        if eval_inputs is None:
            raise ValueError("predict-one is transductive: pass eval_inputs")
        return _point_mass(predict_one_improper(s, eval_inputs))

    def predict_proba(self, s, eval_inputs):
        return np.asarray(predict_one_improper(s, eval_inputs).labels, dtype=float)


# ---------------------------------------------------------------------------
# registry

LEARNER_NAMES = ("threshold", "svm", "least-erm", "version-space", "leaking-erm", "predict-one", "oig", "oig-singleton")


def make_learner(name: str, cls: FiniteClass | None = None) -> Learner:
    """Resolve a learner by its configuration name."""
    if name == "threshold":
        return ThresholdLearner()
    if name == "svm":
        return SVMLearner()
    if name == "leaking-erm":
        return LeakingERM()
    if name == "predict-one":
        return PredictOne()
    if name == "constant":
        return ConstantLearner()
    if name in ("least-erm", "version-space", "oig"):
        if cls is None:
            raise ValueError(f"learner {name!r} needs a finite class")
        if name == "least-erm":
            return LeastElementERM(cls)
        if name == "version-space":
            return VersionSpaceReleaser(cls)
        from .oig import OneInclusionLearner

        return OneInclusionLearner(cls)
    if name == "oig-singleton":
        from .oig import SingletonLearner

        return SingletonLearner()
    raise ValueError(f"unknown learner {name!r}")
