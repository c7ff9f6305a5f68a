"""One-inclusion graphs, probability assignments and the predictors built on them."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations, product
from typing import Callable, Sequence

import networkx as nx
import numpy as np

from .combinatorics import vc_dimension
from .core import Example, FiniteClass, Sample
from .learners import Learner, PredictionVector, _double_over_selections, _training_labels


@dataclass(frozen=True, eq=False)
class OneInclusionGraph:
    """Projection of a class onto ``inputs``; edges join labelings at Hamming distance one.

    ``vertices`` rows are sorted lexicographically; ``edges`` holds
    ``(a, b, coordinate)`` with ``a < b``.
    """

    inputs: tuple
    vertices: np.ndarray
    edges: tuple

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def vertex_index(self, labels) -> int | None:
        return self._lookup.get(bytes(np.asarray(labels, dtype=np.uint8)))

    @property
    def _lookup(self) -> dict:
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {row.tobytes(): i for i, row in enumerate(self.vertices)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def edge_between(self, a: int, b: int) -> int | None:
        cache = self.__dict__.get("_edge_cache")
        if cache is None:
            cache = {(e[0], e[1]): k for k, e in enumerate(self.edges)}
            object.__setattr__(self, "_edge_cache", cache)
        return cache.get((min(a, b), max(a, b)))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_vertices, dtype=int)
        for a, b, _ in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def to_json(self) -> dict:
        return {
            "inputs": [int(x) for x in self.inputs],
            "vertices": self.vertices.tolist(),
            "edges": [[int(a), int(b), int(c)] for a, b, c in self.edges],
        }


def build_graph(cls: FiniteClass, inputs: Sequence[int]) -> OneInclusionGraph:
    inputs = tuple(int(x) for x in inputs)
    sub = cls.restrict(inputs) if inputs else np.zeros((cls.size, 0), dtype=np.uint8)
    verts = np.unique(sub, axis=0) if len(inputs) else sub[:1]
    lookup = {row.tobytes(): i for i, row in enumerate(verts)}
    edges = []
    for a, row in enumerate(verts):
        for c in range(len(inputs)):
            if row[c]:
                continue
            nb = row.copy()
            nb[c] = 1
            b = lookup.get(nb.tobytes())
            if b is not None:
                edges.append((min(a, b), max(a, b), c))
    edges.sort()
    return OneInclusionGraph(inputs, verts, tuple(edges))


@dataclass(frozen=True)
class ProbabilityAssignment:
    """``weights[k]`` is ``f(e_k, a_k)``; the other endpoint carries ``1 - weights[k]``."""

    graph: OneInclusionGraph
    weights: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.graph.edges):
            raise ValueError("one weight per edge")
        if any(not 0 <= w <= 1 for w in self.weights):
            raise ValueError("weights must lie in [0, 1]")

    def f(self, edge: int, vertex: int) -> float:
        a, b, _ = self.graph.edges[edge]
        if vertex == a:
            return self.weights[edge]
        if vertex == b:
            return 1 - self.weights[edge]
        return 0

    def out_degrees(self) -> list:
        out = [0] * self.graph.num_vertices
        for (a, b, _), w in zip(self.graph.edges, self.weights):
            out[a] += w
            out[b] += 1 - w
        return out

    @property
    def max_load(self):
        return max(self.out_degrees(), default=0)

    @property
    def is_deterministic(self) -> bool:
        return all(w in (0, 1) for w in self.weights)


def orient_deterministic(g: OneInclusionGraph, d: int) -> ProbabilityAssignment | None:
    """Orientation with every out-degree at most ``d``, or ``None`` if none exists.

    Starts by charging each edge to its endpoint of smaller degree (lower
    index on ties), so pendant vertices absorb their edges, then repeatedly
    reverses a charged path from an overloaded vertex to one with spare
    capacity. When no such path exists, the vertices reachable from the
    overloaded one span a subgraph of density above ``d``, so no orientation
    meets the bound.
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    deg = g.degrees()
    charged = [b if deg[b] < deg[a] else a for a, b, _ in g.edges]
    out = [0] * g.num_vertices
    for v in charged:
        out[v] += 1
    incident: list = [[] for _ in range(g.num_vertices)]
    for k, (a, b, _) in enumerate(g.edges):
        incident[a].append(k)
        incident[b].append(k)

    while True:
        v = max(range(g.num_vertices), key=lambda i: (out[i], -i), default=None)
        if v is None or out[v] <= d:
            break
        parent = {v: None}
        queue = deque([v])
        target = None
        while queue and target is None:
            p = queue.popleft()
            for k in incident[p]:
                if charged[k] != p:
                    continue
                a, b, _ = g.edges[k]
                q = b if p == a else a
                if q in parent:
                    continue
                parent[q] = (p, k)
                if out[q] <= d - 1:
                    target = q
                    break
                queue.append(q)
        if target is None:
            return None
        q = target
        while parent[q] is not None:
            p, k = parent[q]
            charged[k] = q
            q = p
        out[v] -= 1
        out[target] += 1
    weights = tuple(1 if charged[k] == a else 0 for k, (a, _, _) in enumerate(g.edges))
    return ProbabilityAssignment(g, weights)


def _flow(g: OneInclusionGraph, p: int, q: int):
    """Max flow with edge supply ``q`` and vertex capacity ``p`` (load ``p/q``)."""
    net = nx.DiGraph()
    for k, (a, b, _) in enumerate(g.edges):
        net.add_edge("s", ("e", k), capacity=q)
        net.add_edge(("e", k), ("v", a))
        net.add_edge(("e", k), ("v", b))
    for v in range(g.num_vertices):
        net.add_edge(("v", v), "t", capacity=p)
    value, flow = nx.maximum_flow(net, "s", "t")
    return value, flow


def max_density(g: OneInclusionGraph) -> Fraction:
    """max over vertex subsets of |E(S)| / |S|, the optimal fractional load."""
    m = len(g.edges)
    if m == 0:
        return Fraction(0)
    cands = sorted({Fraction(e, v) for v in range(2, g.num_vertices + 1) for e in range(1, m + 1)})
    lo, hi = 0, len(cands) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        c = cands[mid]
        if _flow(g, c.numerator, c.denominator)[0] == m * c.denominator:
            hi = mid
        else:
            lo = mid + 1
    return cands[lo]


def orient_fractional(g: OneInclusionGraph) -> ProbabilityAssignment:
    """Fractional assignment minimizing the maximum weighted out-degree.

    The optimum equals the maximum subgraph density, found by bisection over
    the finitely many candidate ratios with an integral max-flow feasibility
    test; weights are exact fractions.
    """
    if not g.edges:
        return ProbabilityAssignment(g, ())
    lam = max_density(g)
    p, q = lam.numerator, lam.denominator
    _, flow = _flow(g, p, q)
    weights = tuple(Fraction(flow[("e", k)][("v", a)], q) for k, (a, _, _) in enumerate(g.edges))
    return ProbabilityAssignment(g, weights)


def oig_predict(
    cls: FiniteClass,
    s: Sample,
    test_x: int,
    assignment: ProbabilityAssignment,
) -> dict:
    """Distribution over the label of ``test_x`` given ``s``.

    ``assignment`` must live on a graph whose inputs cover the training inputs
    and ``test_x``.
    """
    g = assignment.graph
    pos = {x: i for i, x in enumerate(g.inputs)}
    seen = _training_labels(s)
    if test_x in seen:
        return {seen[test_x]: 1.0}
    coords = [pos[x] for x in seen]
    want = np.array([seen[x] for x in seen], dtype=np.uint8)
    match = np.flatnonzero((g.vertices[:, coords] == want).all(axis=1)) if coords else np.arange(g.num_vertices)
    if len(match) == 0:
        raise ValueError("training sample not realizable by the class")
    c = pos[test_x]
    labels = {int(g.vertices[v, c]) for v in match}
    if len(labels) == 1:
        return {labels.pop(): 1.0}
    # two consistent extensions differing only at the test coordinate
    v0 = next(int(v) for v in match if g.vertices[v, c] == 0)
    v1 = next(int(v) for v in match if g.vertices[v, c] == 1)
    e = g.edge_between(v0, v1)
    if e is None:
        raise ValueError("consistent extensions are not adjacent")
    p1 = float(assignment.f(e, v0))
    return {k: v for k, v in ((0, 1.0 - p1), (1, p1)) if v > 0}


def singleton_predict(s: Sample, test_x) -> dict:
    """Randomized rule for point functions plus the zero function.

    A 1-labelled training input identifies the target. Otherwise an unseen
    input is labelled 1 with probability ``1/(n+1)``; inputs seen in training
    keep their (zero) label so the rule stays consistent.
    """
    seen = _training_labels(s)
    ones = {x for x, y in seen.items() if y == 1}
    if len(ones) > 1:
        raise ValueError("two distinct 1-labelled inputs: not realizable by point functions")
    if ones:
        return {int(test_x in ones): 1.0}
    if test_x in seen:
        return {0: 1.0}
    n = len(s)
    return {0: n / (n + 1), 1: 1 / (n + 1)}


def _p_one(dist: dict) -> float:
    return float(dist.get(1, 0.0))


@dataclass(frozen=True)
class LooProfile:
    errors: tuple
    average: float


def loo_error(predict: Callable, seq: Sample) -> LooProfile:
    """Exact expected leave-one-out losses; ``predict(train, x)`` returns a label distribution."""
    errs = []
    for i, (x, y) in enumerate(seq):
        rest = tuple(seq[:i]) + tuple(seq[i + 1 :])
        p1 = _p_one(predict(rest, x))
        errs.append(p1 if y == 0 else 1.0 - p1)
    return LooProfile(tuple(errs), sum(errs) / len(errs) if errs else 0.0)


class OneInclusionLearner(Learner):
    """Transductive one-inclusion graph predictor over a finite class.

    The graph for a prediction is built on the sorted distinct inputs of the
    training set plus the test input, so the rule is symmetric. The
    assignment is cached per input set.
    """

    name = "oig"
    transductive = True

    def __init__(self, cls: FiniteClass, kind: str = "deterministic", d: int | None = None):
        if kind not in ("deterministic", "fractional"):
            raise ValueError(f"unknown assignment kind {kind!r}")
        self.cls = cls
        self.kind = kind
        self.d = vc_dimension(cls) if d is None else d
        self.randomized = kind == "fractional"
        self._cache: dict = {}

    def assignment(self, inputs: tuple) -> ProbabilityAssignment:
        a = self._cache.get(inputs)
        if a is None:
            g = build_graph(self.cls, inputs)
            if self.kind == "deterministic":
                a = orient_deterministic(g, self.d)
                if a is None:
                    raise ValueError(f"no orientation with out-degree <= {self.d}")
            else:
                a = orient_fractional(g)
            if len(self._cache) > 200_000:
                self._cache.clear()
            self._cache[inputs] = a
        return a

    def predict(self, s: Sample, x: int) -> dict:
        inputs = tuple(sorted({ex.x for ex in s} | {x}))
        return oig_predict(self.cls, s, x, self.assignment(inputs))

    def predict_proba(self, s, eval_inputs):
        seen = _training_labels(s)
        out = np.empty(len(eval_inputs))
        for i, x in enumerate(eval_inputs):
            out[i] = seen[x] if x in seen else _p_one(self.predict(s, x))
        return out

    def train(self, s, eval_inputs=None):
        if eval_inputs is None:
            raise ValueError("the one-inclusion predictor is transductive: pass eval_inputs")
        return product_distribution(self.predict_proba(s, eval_inputs))

    def __repr__(self):
        return f"OneInclusionLearner({self.cls!r}, kind={self.kind!r})"


class SingletonLearner(Learner):
    name = "oig-singleton"
    proper = False
    transductive = True
    randomized = True

    def predict(self, s, x):
        return singleton_predict(s, x)

    def predict_proba(self, s, eval_inputs):
        return np.array([_p_one(singleton_predict(s, x)) for x in eval_inputs])

    def train(self, s, eval_inputs=None):
        if eval_inputs is None:
            raise ValueError("the singleton rule is transductive: pass eval_inputs")
        return product_distribution(self.predict_proba(s, eval_inputs))

    def selection_loss_proba(self, z) -> np.ndarray:
        """P(loss = 1) for every selection (rows) and cell (row-major columns)."""
        cells = [ex for row in z.rows for ex in row]
        xs = np.array([ex.x for ex in cells])
        ys = np.array([ex.y for ex in cells], dtype=np.uint8)
        one_inputs = set(xs[ys == 1].tolist())
        if len(one_inputs) > 1:
            raise ValueError("supersample not realizable by point functions")
        n = z.n
        eq = [[xs == ex.x for ex in row] for row in z.rows]
        seen = _double_over_selections(np.array(eq[0]), np.array(eq[1]), np.zeros(2 * n, dtype=bool), np.logical_or)
        ones = _double_over_selections(
            np.array([ex.y == 1 for ex in z.rows[0]]), np.array([ex.y == 1 for ex in z.rows[1]]), False, np.logical_or
        )
        is_star = np.isin(xs, list(one_inputs)) if one_inputs else np.zeros(2 * n, dtype=bool)
        p1 = np.where(ones[:, None], is_star[None, :].astype(float), 1.0 / (n + 1))
        p1 = np.where(seen, ys[None, :].astype(float), p1)
        return np.where(ys[None, :] == 1, 1.0 - p1, p1)


def product_distribution(p1: np.ndarray, limit: int = 20) -> dict:
    """Independent per-input labels as an explicit distribution over prediction vectors."""
    p1 = np.asarray(p1, dtype=float)
    free = [i for i, p in enumerate(p1) if 0.0 < p < 1.0]
    if len(free) > limit:
        raise ValueError(f"{len(free)} randomized coordinates exceed the enumeration limit")
    base = [int(p >= 1.0) for p in p1]
    out = {}
    for bits in product((0, 1), repeat=len(free)):
        labels = list(base)
        prob = 1.0
        for i, b in zip(free, bits):
            labels[i] = b
            prob *= p1[i] if b else 1.0 - p1[i]
        out[PredictionVector(tuple(labels))] = prob
    return out


# ---------------------------------------------------------------------------
# leave-one-out based eCMI bound


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


@dataclass(frozen=True)
class LooBoundValue:
    value: float
    kappa: float
    stderr: float
    exact: bool


def error_oracle(predict: Callable) -> Callable:
    """Turn ``predict(train, x) -> label distribution`` into ``P_e(train, (x, y))``."""

    def pe(train, test):
        p1 = _p_one(predict(train, test[0]))
        return p1 if test[1] == 0 else 1.0 - p1

    return pe


def _subset_terms(pe: Callable, zt: Sample, J: tuple) -> tuple:
    errs = []
    for j in J:
        train = tuple(zt[i] for i in J if i != j)
        errs.append(pe(train, zt[j]))
    k = len(J)
    return sum(errs) / k, sum(binary_entropy(e) for e in errs) / k


def loo_ecmi_bound(
    pe: Callable,
    zt: Sample,
    exact_limit: int = 16,
    samples: int = 2000,
    seed: int = 0,
) -> LooBoundValue:
    """``n [h2(k) + k log 2 - E_J mean_j h2(P_e)]`` with ``k = E_J mean_j P_e``.

    ``J`` ranges over (n+1)-subsets of the 2n points of ``zt``. Exact when
    ``2n <= exact_limit``; otherwise ``J`` is sampled uniformly and a
    delta-method standard error is reported.
    """
    m = len(zt)
    if m < 2 or m % 2:
        raise ValueError("need 2n >= 2 examples")
    n = m // 2
    if m <= exact_limit:
        terms = np.array([_subset_terms(pe, zt, J) for J in combinations(range(m), n + 1)])
        exact = True
    else:
        rng = np.random.default_rng(seed)
        terms = np.array(
            [_subset_terms(pe, zt, tuple(sorted(rng.choice(m, n + 1, replace=False)))) for _ in range(samples)]
        )
        exact = False
    kappa = float(terms[:, 0].mean())
    ent = float(terms[:, 1].mean())
    value = n * (binary_entropy(kappa) + kappa * math.log(2) - ent)
    stderr = 0.0
    if not exact:
        slope = math.log(2) + (math.log((1 - kappa) / kappa) if 0 < kappa < 1 else 0.0)
        lin = n * (slope * terms[:, 0] - terms[:, 1])
        stderr = float(lin.std(ddof=1) / math.sqrt(len(lin)))
    return LooBoundValue(value, kappa, stderr, exact)


def symmetrization_sides(f: Callable, zt: Sample) -> tuple:
    """Both sides of the (U, permutation) symmetrization identity.

    Left: average over all bijections of the 2n points onto a 2 x n array and
    all selections ``u`` of ``f(training row; ghost of column 1)``. Right:
    average over (n+1)-subsets ``J`` and ``j in J`` of ``f(zt_{J-j}; zt_j)``.
    Points are handled by position, so repeated values are fine. Returns
    exact ``Fraction`` values when ``f`` returns rationals.
    """
    m = len(zt)
    if m < 2 or m % 2:
        raise ValueError("need 2n >= 2 examples")
    n = m // 2
    total = 0
    count = 0
    for perm in permutations(range(m)):
        rows = (perm[:n], perm[n:])
        for u in product((0, 1), repeat=n):
            train = tuple(zt[rows[u[j]][j]] for j in range(n))
            ghost = zt[rows[1 - u[0]][0]]
            total += f(train, ghost)
            count += 1
    lhs = Fraction(total) / count if isinstance(total, (int, Fraction)) else total / count
    rtotal = 0
    rcount = 0
    for J in combinations(range(m), n + 1):
        for j in J:
            rtotal += f(tuple(zt[i] for i in J if i != j), zt[j])
            rcount += 1
    rhs = Fraction(rtotal) / rcount if isinstance(rtotal, (int, Fraction)) else rtotal / rcount
    return lhs, rhs


__all__ = [
    "Example",
    "OneInclusionGraph",
    "ProbabilityAssignment",
    "LooProfile",
    "LooBoundValue",
    "OneInclusionLearner",
    "SingletonLearner",
    "build_graph",
    "orient_deterministic",
    "orient_fractional",
    "max_density",
    "oig_predict",
    "singleton_predict",
    "loo_error",
    "error_oracle",
    "loo_ecmi_bound",
    "symmetrization_sides",
    "product_distribution",
    "binary_entropy",
]
