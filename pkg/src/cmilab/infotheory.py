"""Supersamples and exact / Monte-Carlo (evaluated) conditional mutual information.

All quantities are in nats. Selections are enumerated as integers ``k`` in
``range(2**n)`` with ``u_j = (k >> j) & 1``.
"""

from __future__ import annotations

import math
import os
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import Distribution, Example, FiniteDistribution, Sample, derive_seed, draw_sample
from .learners import Learner, prediction_table

EXACT_CAP_DETERMINISTIC = 16
EXACT_CAP_RANDOMIZED = 10
_SUPPORT_LIMIT = 1 << 22
_PROB_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# supersamples


@dataclass(frozen=True)
class Supersample:
    """2 x n array of examples; ``rows[i][j]`` is ``Z_{i,j}``."""

    rows: tuple

    def __post_init__(self):
        rows = tuple(tuple(Example(*ex) for ex in r) for r in self.rows)
        if len(rows) != 2 or len(rows[0]) != len(rows[1]):
            raise ValueError("supersample must be a rectangular 2 x n array")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return len(self.rows[0])

    @property
    def cells(self) -> tuple:
        """Row-major list of the 2n examples."""
        return self.rows[0] + self.rows[1]

    @property
    def inputs(self) -> tuple:
        return tuple(ex.x for ex in self.cells)


def draw_supersample(dist: Distribution, n: int, seed: int) -> Supersample:
    flat = draw_sample(dist, 2 * n, seed)
    return Supersample((flat[:n], flat[n:]))


def selection_bits(k: int, n: int) -> tuple:
    return tuple((k >> j) & 1 for j in range(n))


def select_training(z: Supersample, u: Sequence[int]) -> Sample:
    if len(u) != z.n:
        raise ValueError(f"selection has {len(u)} bits for {z.n} columns")
    return tuple(z.rows[b][j] for j, b in enumerate(u))


def ghost_sample(z: Supersample, u: Sequence[int]) -> Sample:
    return select_training(z, [1 - b for b in u])


# ---------------------------------------------------------------------------
# entropy primitives


def _probs(p) -> np.ndarray:
    if isinstance(p, Mapping):
        p = list(p.values())
    a = np.asarray([float(v) for v in p], dtype=float)
    if (a < 0).any():
        raise ValueError("negative probability")
    return a


def entropy(p) -> float:
    a = _probs(p)
    a = a[a > 0]
    return float(-(a * np.log(a)).sum())


def binary_entropy(p: float) -> float:
    if p < 0 or p > 1:
        raise ValueError("probability outside [0, 1]")
    if p == 0 or p == 1:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log1p(-p)


def kl(q, p) -> float:
    """KL(q || p) over a shared finite support (dicts keyed by outcome, or aligned arrays)."""
    if isinstance(q, Mapping):
        keys = set(q) | set(p)
        qa = _probs([q.get(k, 0.0) for k in keys])
        pa = _probs([p.get(k, 0.0) for k in keys])
    else:
        qa, pa = _probs(q), _probs(p)
    mask = qa > 0
    if (pa[mask] == 0).any():
        return math.inf
    return float((qa[mask] * np.log(qa[mask] / pa[mask])).sum())


def marginal(joint: Mapping, keep: Sequence[int]) -> dict:
    out: dict = defaultdict(float)
    for key, w in joint.items():
        out[tuple(key[i] for i in keep)] += float(w)
    return dict(out)


def conditional_entropy(joint: Mapping, given: Sequence[int]) -> float:
    """H(rest | given) for a joint keyed by tuples; ``given`` lists conditioning positions."""
    return entropy(joint) - entropy(marginal(joint, given))


def chain_lower_check(joint: Mapping) -> tuple:
    """``(H(X_1..X_n | Y), sum_i H(X_i | X_-i, Y))`` for keys ``(x_1, ..., x_n, y)``.

    The first is never below the second.
    """
    k = len(next(iter(joint)))
    n = k - 1
    h_all = entropy(joint)
    lhs = h_all - entropy(marginal(joint, [n]))
    rhs = sum(h_all - entropy(marginal(joint, [j for j in range(k) if j != i])) for i in range(n))
    return lhs, rhs


def _entropy_of_counts(counts: np.ndarray, total: int) -> float:
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


# ---------------------------------------------------------------------------
# per-selection outputs


def _check_cap(learner: Learner, n: int, cap: int | None) -> None:
    if cap is None:
        cap = EXACT_CAP_RANDOMIZED if learner.randomized else EXACT_CAP_DETERMINISTIC
    if n > cap:
        raise ValueError(f"n = {n} exceeds the exact-mode cap {cap}; use sampled estimation")


def _train(learner: Learner, s: Sample, z: Supersample) -> dict:
    return learner.train(s, z.inputs if learner.transductive else None)


def _loss_code(output, z: Supersample) -> int:
    pred = prediction_table(output, z)
    truth = np.array([[ex.y for ex in row] for row in z.rows], dtype=np.uint8)
    bits = (pred != truth).ravel()
    return int(sum(1 << i for i in np.flatnonzero(bits)))


def _deterministic_codes(learner: Learner, z: Supersample, losses: bool) -> np.ndarray:
    """One hashable code per selection for a deterministic learner."""
    fast = learner.selection_outputs(z)
    if fast is not None:
        codes, decode = fast
        if not losses:
            return codes
        uniq, inv = np.unique(codes, return_inverse=True)
        table = np.array([_loss_code(decode(c), z) for c in uniq], dtype=object)
        return table[inv]
    out = []
    for k in range(1 << z.n):
        (w,) = _train(learner, select_training(z, selection_bits(k, z.n)), z).keys()
        out.append(_loss_code(w, z) if losses else w)
    return np.array(out + [None], dtype=object)[:-1]


def _hash_entropy(codes: np.ndarray) -> float:
    if codes.dtype == object:
        counts = np.array(list(Counter(codes.tolist()).values()))
    else:
        _, counts = np.unique(codes, return_counts=True)
    return _entropy_of_counts(counts, len(codes))


def _mixture_information(per_selection: Iterable[Mapping]) -> float:
    """I(W; U) from the list of conditional distributions p(W | u), u uniform."""
    mix: dict = defaultdict(float)
    cond = []
    count = 0
    for dist in per_selection:
        count += 1
        cond.append(entropy(dist))
        for w, p in dist.items():
            mix[w] += p
    probs = np.array(list(mix.values())) / count
    return entropy(probs) - math.fsum(cond) / count


def _product_loss_matrix(learner: Learner, z: Supersample) -> np.ndarray:
    fast = learner.selection_loss_proba(z)
    if fast is not None:
        return np.asarray(fast, dtype=float)
    ys = np.array([ex.y for ex in z.cells])
    rows = []
    for k in range(1 << z.n):
        p1 = np.asarray(learner.predict_proba(select_training(z, selection_bits(k, z.n)), z.inputs), dtype=float)
        rows.append(np.where(ys == 1, 1.0 - p1, p1))
    return np.array(rows)


def _h2_array(q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -q * np.log(q) - (1 - q) * np.log1p(-q)
    return np.where((q > 0) & (q < 1), h, 0.0)


def _product_support_size(Q: np.ndarray) -> int:
    free = ((Q > 0) & (Q < 1)).sum(axis=1)
    return int(np.sum(np.exp2(np.minimum(free, 62)).astype(np.int64)))


def _product_mixture_entropy_exact(Q: np.ndarray) -> float:
    K, C = Q.shape
    weights = 1 << np.arange(C, dtype=np.int64)
    all_codes, all_probs = [], []
    for row in Q:
        free = np.flatnonzero((row > 0) & (row < 1))
        codes = np.array([int(weights[row >= 1].sum())], dtype=np.int64)
        probs = np.array([1.0])
        for c in free:
            codes = np.concatenate([codes, codes + weights[c]])
            probs = np.concatenate([probs * (1 - row[c]), probs * row[c]])
        all_codes.append(codes)
        all_probs.append(probs)
    codes = np.concatenate(all_codes)
    probs = np.concatenate(all_probs) / K
    _, inv = np.unique(codes, return_inverse=True)
    mix = np.bincount(inv, weights=probs)
    mix = mix[mix > _PROB_FLOOR]
    return float(-(mix * np.log(mix)).sum())


def _product_mixture_entropy_sampled(Q: np.ndarray, samples: int, rng: np.random.Generator) -> float:
    """Unbiased estimate of the mixture entropy: mean of -log p(L) over L drawn from the mixture."""
    K, _ = Q.shape
    u = rng.integers(0, K, size=samples)
    L = (rng.random((samples, Q.shape[1])) < Q[u]).astype(float)
    with np.errstate(divide="ignore"):
        log1 = np.where(Q > 0, np.log(np.where(Q > 0, Q, 1.0)), -1e5)
        log0 = np.where(Q < 1, np.log1p(-np.where(Q < 1, Q, 0.0)), -1e5)
    ll = L @ log1.T + (1 - L) @ log0.T  # samples x K
    top = ll.max(axis=1, keepdims=True)
    logp = top[:, 0] + np.log(np.exp(ll - top).sum(axis=1)) - math.log(K)
    return float(-logp.mean())


# ---------------------------------------------------------------------------
# disintegrated quantities


def disintegrated_cmi(learner: Learner, z: Supersample, cap: int | None = None) -> float:
    """I^z(W; U) by enumerating all 2^n selections."""
    _check_cap(learner, z.n, cap)
    if learner.transductive:
        # predictions on the supersample and the loss table determine each other
        return disintegrated_ecmi(learner, z, cap)
    if not learner.randomized:
        return _hash_entropy(_deterministic_codes(learner, z, losses=False))
    return _mixture_information(
        _train(learner, select_training(z, selection_bits(k, z.n)), z) for k in range(1 << z.n)
    )


def disintegrated_ecmi(
    learner: Learner,
    z: Supersample,
    cap: int | None = None,
    inner_samples: int = 0,
    seed: int = 0,
) -> float:
    """I^z(L; U) for the 2 x n loss table.

    Product-form transductive learners use the per-cell independent
    randomness of their predictions; the mixture entropy is exact when its
    support is small enough, otherwise (or when ``inner_samples > 0``) it is
    estimated without bias from ``inner_samples`` draws of ``L``.
    """
    if learner.transductive:
        if inner_samples <= 0:
            _check_cap(learner, z.n, cap)
        Q = _product_loss_matrix(learner, z)
        cond = float(_h2_array(Q).sum(axis=1).mean())
        if inner_samples <= 0:
            if _product_support_size(Q) > _SUPPORT_LIMIT:
                raise ValueError("loss-table support too large for exact mixing; pass inner_samples")
            mixed = _product_mixture_entropy_exact(Q)
        else:
            mixed = _product_mixture_entropy_sampled(Q, inner_samples, np.random.default_rng(seed))
        return mixed - cond
    _check_cap(learner, z.n, cap)
    if not learner.randomized:
        return _hash_entropy(_deterministic_codes(learner, z, losses=True))

    def loss_dists():
        for k in range(1 << z.n):
            dist: dict = defaultdict(float)
            for w, p in _train(learner, select_training(z, selection_bits(k, z.n)), z).items():
                dist[_loss_code(w, z)] += p
            yield dist

    return _mixture_information(loss_dists())


def product_mode(learner: Learner, n: int) -> str:
    """Computation mode used for a learner at size ``n``."""
    if not learner.transductive:
        return "exact-in-U"
    if not learner.randomized:
        return "factorized"
    return "factorized" if n <= EXACT_CAP_RANDOMIZED else "sampled"


# ---------------------------------------------------------------------------
# risk of trained outputs


def output_risk(learner: Learner, s: Sample, dist: Distribution, eval_samples: int = 20000, seed: int = 0) -> float:
    """Expected risk of the learner trained on ``s`` (exact on finite supports)."""
    if isinstance(dist, FiniteDistribution):
        xs = [ex.x for ex in dist.examples]
        ys = np.array([ex.y for ex in dist.examples])
        w = dist.probabilities
        if learner.transductive:
            p1 = np.asarray(learner.predict_proba(s, xs), dtype=float)
            return float(np.dot(w, np.where(ys == 1, 1.0 - p1, p1)))
        total = 0.0
        for out, p in learner.train(s).items():
            wrong = np.array([out(x) != y for x, y in zip(xs, ys)])
            total += p * float(np.dot(w, wrong))
        return total
    if learner.transductive:
        raise ValueError("transductive risk needs a finite support")
    if dist.family == "uniform-interval" and type(learner).__name__ in ("ThresholdLearner", "LeakingERM"):
        total = 0.0
        for out, p in learner.train(s).items():
            lo, hi = dist.low, dist.high
            t = min(max(out.position, lo), hi)
            th = min(max(dist.threshold, lo), hi)
            total += p * abs(t - th) / (hi - lo)
        return total
    test = draw_sample(dist, eval_samples, seed)
    total = 0.0
    for out, p in learner.train(s).items():
        total += p * sum(out(ex.x) != ex.y for ex in test) / len(test)
    return total


def selection_averaged_risk(learner: Learner, z: Supersample, dist: Distribution) -> float:
    """Mean over all selections ``u`` of the risk of the learner trained on ``Z_u``."""
    n = z.n
    vals = [output_risk(learner, select_training(z, selection_bits(k, n)), dist) for k in range(1 << n)]
    return math.fsum(vals) / len(vals)


# ---------------------------------------------------------------------------
# Monte-Carlo over supersamples


@dataclass(frozen=True)
class MIEstimate:
    mean: float
    stderr: float
    draws: int
    mode: str
    values: tuple = ()

    def as_row(self, n: int) -> dict:
        return {"n": n, "mean_nats": self.mean, "stderr": self.stderr, "draws": self.draws, "mode": self.mode}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CMI_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _map_draws(fn: Callable[[int], float], draws: int) -> list:
    workers = min(_workers(), draws)
    if workers <= 1:
        return [fn(i) for i in range(draws)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, range(draws)))


def summarize(values: Sequence[float], mode: str) -> MIEstimate:
    vals = tuple(float(v) for v in values)
    k = len(vals)
    mean = math.fsum(vals) / k
    var = math.fsum((v - mean) ** 2 for v in vals) / (k - 1) if k > 1 else 0.0
    return MIEstimate(mean, math.sqrt(var / k), k, mode, vals)


def _estimate(per_z: Callable[[Supersample, int], float], dist, n, draws, seed, mode) -> MIEstimate:
    if draws < 2:
        raise ValueError("draws must be >= 2")

    def one(i: int) -> float:
        s = derive_seed(seed, i)
        return per_z(draw_supersample(dist, n, s), s)

    return summarize(_map_draws(one, draws), mode)


def estimate_cmi(learner: Learner, dist: Distribution, n: int, draws: int, seed: int) -> MIEstimate:
    return _estimate(lambda z, s: disintegrated_cmi(learner, z), dist, n, draws, seed, product_mode(learner, n))


def estimate_ecmi(
    learner: Learner, dist: Distribution, n: int, draws: int, seed: int, inner_samples: int = 256
) -> MIEstimate:
    """eCMI estimate; randomized transductive learners beyond the exact cap sample the mixture entropy."""
    mode = product_mode(learner, n)
    inner = inner_samples if mode == "sampled" else 0
    return _estimate(
        lambda z, s: disintegrated_ecmi(learner, z, inner_samples=inner, seed=derive_seed(s, 1)),
        dist,
        n,
        draws,
        seed,
        mode,
    )


def estimate_vs_cmi(cls, dist: Distribution, n: int, draws: int, seed: int) -> MIEstimate:
    """I(V(S); U | Z): CMI of the learner that releases the version space."""
    from .learners import VersionSpaceReleaser

    return estimate_cmi(VersionSpaceReleaser(cls), dist, n, draws, seed)


@dataclass(frozen=True)
class JointEstimate:
    """Per-draw eCMI and selection-averaged risk from the same supersamples."""

    ecmi: MIEstimate
    risk: MIEstimate


def estimate_risk_and_ecmi(
    learner: Learner, dist: Distribution, n: int, draws: int, seed: int, inner_samples: int = 256
) -> JointEstimate:
    mode = product_mode(learner, n)
    inner = inner_samples if mode == "sampled" else 0

    def one(i: int):
        s = derive_seed(seed, i)
        z = draw_supersample(dist, n, s)
        return (
            disintegrated_ecmi(learner, z, inner_samples=inner, seed=derive_seed(s, 1)),
            selection_averaged_risk(learner, z, dist),
        )

    pairs = _map_draws(one, draws)
    return JointEstimate(summarize([p[0] for p in pairs], mode), summarize([p[1] for p in pairs], "exact-in-U"))


def exact_cmi(learner: Learner, dist: FiniteDistribution, n: int, quantity: str = "cmi", limit: int = 200_000) -> float:
    """E_Z of the disintegrated value by enumerating every supersample of atoms."""
    from itertools import product

    atoms = dist.examples
    p = dist.probabilities
    if len(atoms) ** (2 * n) > limit:
        raise ValueError("too many supersamples to enumerate")
    fn = disintegrated_cmi if quantity == "cmi" else disintegrated_ecmi
    total = []
    for idx in product(range(len(atoms)), repeat=2 * n):
        w = float(np.prod(p[list(idx)]))
        z = Supersample((tuple(atoms[i] for i in idx[:n]), tuple(atoms[i] for i in idx[n:])))
        total.append(w * fn(learner, z))
    return math.fsum(total)


__all__ = [
    "Supersample",
    "MIEstimate",
    "JointEstimate",
    "draw_supersample",
    "selection_bits",
    "select_training",
    "ghost_sample",
    "entropy",
    "binary_entropy",
    "kl",
    "marginal",
    "conditional_entropy",
    "chain_lower_check",
    "disintegrated_cmi",
    "disintegrated_ecmi",
    "estimate_cmi",
    "estimate_ecmi",
    "estimate_vs_cmi",
    "estimate_risk_and_ecmi",
    "exact_cmi",
    "output_risk",
    "selection_averaged_risk",
    "summarize",
]
