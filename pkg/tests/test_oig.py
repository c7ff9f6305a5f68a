import math
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmilab.core import Example, FiniteClass, as_sample, full_class, point_functions, thresholds
from cmilab.oig import (
    OneInclusionLearner,
    ProbabilityAssignment,
    SingletonLearner,
    build_graph,
    error_oracle,
    loo_ecmi_bound,
    loo_error,
    max_density,
    oig_predict,
    orient_deterministic,
    orient_fractional,
    product_distribution,
    singleton_predict,
    symmetrization_sides,
)

from oracles import brute_orientation, lp_min_max_load, max_density_bruteforce


def random_class(data, max_m=4, max_h=10):
    m = data.draw(st.integers(1, max_m))
    rows = data.draw(st.lists(st.lists(st.integers(0, 1), min_size=m, max_size=m), min_size=1, max_size=max_h))
    return FiniteClass(np.array(rows, dtype=np.uint8))


# graphs


def test_star_graph():
    g = build_graph(point_functions(4), [0, 1, 2, 3])
    assert g.num_vertices == 5
    assert len(g.edges) == 4
    assert g.vertices[0].tolist() == [0, 0, 0, 0]
    assert all(a == 0 for a, _, _ in g.edges)
    assert sorted(g.vertices[1:].sum(axis=1).tolist()) == [1, 1, 1, 1]


def test_square_and_trivial_graphs():
    g = build_graph(full_class(2), [0, 1])
    assert g.num_vertices == 4 and len(g.edges) == 4
    assert g.degrees().tolist() == [2, 2, 2, 2]
    single = build_graph(FiniteClass(np.array([[0, 1, 1]])), [0, 1, 2])
    assert single.num_vertices == 1 and single.edges == ()


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_edges_are_hamming_one(data):
    cls = random_class(data)
    g = build_graph(cls, range(cls.domain_size))
    assert len({r.tobytes() for r in g.vertices}) == g.num_vertices
    pairs = {(a, b) for a, b, _ in g.edges}
    for a in range(g.num_vertices):
        for b in range(a + 1, g.num_vertices):
            diff = np.flatnonzero(g.vertices[a] != g.vertices[b])
            assert ((a, b) in pairs) == (len(diff) == 1)
    for a, b, c in g.edges:
        assert np.flatnonzero(g.vertices[a] != g.vertices[b]).tolist() == [c]


# orientations


def test_orientation_examples():
    star = build_graph(point_functions(4), range(4))
    a = orient_deterministic(star, 1)
    assert a.is_deterministic
    assert a.out_degrees()[0] == 0 and a.max_load == 1
    sq = orient_deterministic(build_graph(full_class(2), [0, 1]), 1)
    assert sq.out_degrees() == [1, 1, 1, 1]
    path = orient_deterministic(build_graph(thresholds(8), range(8)), 1)
    assert path.max_load <= 1
    assert orient_deterministic(build_graph(full_class(3), range(3)), 1) is None


def test_fractional_examples():
    edge = orient_fractional(build_graph(full_class(1), [0]))
    assert edge.max_load == Fraction(1, 2)
    star = orient_fractional(build_graph(point_functions(4), range(4)))
    # the centre can shed load onto every leaf: 4 edges over 5 vertices
    assert star.max_load == Fraction(4, 5)
    assert orient_fractional(build_graph(full_class(2), [0, 1])).max_load == 1


def test_assignment_validation():
    g = build_graph(full_class(1), [0])
    with pytest.raises(ValueError):
        ProbabilityAssignment(g, (0.5, 0.5))
    with pytest.raises(ValueError):
        ProbabilityAssignment(g, (1.5,))
    a = ProbabilityAssignment(g, (0.25,))
    assert a.f(0, 0) + a.f(0, 1) == 1


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_deterministic_orientation_matches_brute_force(data):
    cls = random_class(data)
    g = build_graph(cls, range(cls.domain_size))
    if len(g.edges) > 12:
        return
    for d in range(0, 4):
        a = orient_deterministic(g, d)
        assert (a is not None) == brute_orientation(g, d)
        if a is not None:
            assert a.is_deterministic and a.max_load <= d


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_fractional_orientation_is_optimal(data):
    cls = random_class(data)
    g = build_graph(cls, range(cls.domain_size))
    a = orient_fractional(g)
    for k, (u, v, _) in enumerate(g.edges):
        assert a.f(k, u) + a.f(k, v) == 1
        assert all(a.f(k, w) == 0 for w in range(g.num_vertices) if w not in (u, v))
    assert float(a.max_load) == pytest.approx(lp_min_max_load(g), abs=1e-9)
    assert float(max_density(g)) == pytest.approx(max_density_bruteforce(g), abs=1e-12)
    assert a.max_load <= max(1, int(np.log2(max(cls.size, 1))) + 1)


# prediction


def test_oig_predict_examples():
    pf = point_functions(3)
    star = build_graph(pf, range(3))
    det = orient_deterministic(star, 1)
    # unique consistent extension
    assert oig_predict(pf, as_sample([(0, 1), (1, 0)]), 2, det) == {0: 1.0}
    # centre/leaf edge charged to the leaf: predict the centre's label
    assert oig_predict(pf, as_sample([(0, 0), (1, 0)]), 2, det) == {0: 1.0}
    half = ProbabilityAssignment(build_graph(full_class(1), [0]), (Fraction(1, 2),))
    assert oig_predict(full_class(1), (), 0, half) == {0: 0.5, 1: 0.5}
    with pytest.raises(ValueError):
        oig_predict(pf, as_sample([(0, 1), (1, 1)]), 2, det)


def test_singleton_predict_examples():
    s = as_sample([(1, 0), (2, 0), (3, 0)])
    assert singleton_predict(s, 9) == {0: 0.75, 1: 0.25}
    t = as_sample([(5, 1), (2, 0)])
    assert singleton_predict(t, 5) == {1: 1.0}
    assert singleton_predict(t, 7) == {0: 1.0}
    assert singleton_predict(s, 2) == {0: 1.0}
    with pytest.raises(ValueError):
        singleton_predict(as_sample([(5, 1), (6, 1)]), 0)


def test_product_distribution():
    dist = product_distribution(np.array([1.0, 0.25, 0.0, 0.5]))
    assert len(dist) == 4
    assert sum(dist.values()) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        product_distribution(np.full(5, 0.5), limit=4)


# leave-one-out


def test_loo_examples():
    seq = as_sample([(i, 0) for i in range(5)])
    prof = loo_error(singleton_predict, seq)
    assert prof.errors == pytest.approx([1 / 5] * 5)
    assert prof.average == pytest.approx(1 / 5)
    const = OneInclusionLearner(FiniteClass(np.zeros((1, 5), dtype=np.uint8)))
    assert loo_error(const.predict, seq).errors == (0.0,) * 5


@pytest.mark.parametrize("m", [3, 4, 5, 6])
def test_deterministic_oig_loo_on_thresholds(m):
    cls = thresholds(m)
    learner = OneInclusionLearner(cls)
    for h in range(cls.size):
        seq = tuple(Example(x, int(cls.labels[h, x])) for x in range(m))
        for p in permutations(seq):
            assert loo_error(learner.predict, p).average <= 1 / m + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_deterministic_oig_loo_general(data):
    cls = random_class(data, max_m=5, max_h=14)
    learner = OneInclusionLearner(cls)
    h = data.draw(st.integers(0, cls.size - 1))
    xs = data.draw(st.permutations(range(cls.domain_size)))
    seq = tuple(Example(x, int(cls.labels[h, x])) for x in xs)
    assert loo_error(learner.predict, seq).average <= learner.d / len(seq) + 1e-12


def test_fractional_learner_is_symmetric():
    cls = thresholds(5)
    learner = OneInclusionLearner(cls, kind="fractional")
    assert learner.randomized
    seq = as_sample([(0, 0), (3, 1), (1, 0)])
    ref = learner.predict(seq, 2)
    for p in permutations(seq):
        assert learner.predict(p, 2) == ref
    assert sum(ref.values()) == pytest.approx(1)


def test_singleton_learner_matches_rule():
    learner = SingletonLearner()
    s = as_sample([(0, 0), (1, 0)])
    assert learner.predict_proba(s, [0, 1, 2, 3]).tolist() == pytest.approx([0, 0, 1 / 3, 1 / 3])
    with pytest.raises(ValueError):
        learner.train(s)


# loo-based eCMI bound


def test_loo_bound_examples():
    n = 4
    zt = as_sample([(i, 0) for i in range(2 * n)])
    v = loo_ecmi_bound(error_oracle(singleton_predict), zt)
    assert v.exact
    assert v.value == pytest.approx(n * math.log(2) / (n + 1), abs=1e-12)
    assert v.kappa == pytest.approx(1 / (n + 1))
    assert loo_ecmi_bound(lambda tr, te: 0.0, zt).value == 0.0
    with pytest.raises(ValueError):
        loo_ecmi_bound(lambda tr, te: 0.0, zt[:3])


def test_loo_bound_sampled_agrees_with_exact():
    learner = OneInclusionLearner(thresholds(12), kind="fractional")
    zt = as_sample([(x, int(x >= 5)) for x in (0, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 1)])
    pe = error_oracle(learner.predict)
    exact = loo_ecmi_bound(pe, zt)
    sampled = loo_ecmi_bound(pe, zt, exact_limit=0, samples=3000, seed=4)
    assert exact.exact and not sampled.exact
    assert sampled.stderr > 0
    assert abs(sampled.value - exact.value) <= 4 * sampled.stderr


@pytest.mark.parametrize("m", [4, 6])
def test_symmetrization_identity(m):
    zt = as_sample([(i % 3, int(i % 3 == 1)) for i in range(m)])

    def f(train, test):
        # permutation invariant in the training argument, exact rationals
        return Fraction(sum(x for x, _ in train) + 3 * test[0] + 7 * test[1], 1 + len({x for x, _ in train}))

    lhs, rhs = symmetrization_sides(f, zt)
    assert isinstance(lhs, Fraction) and lhs == rhs


def test_symmetrization_with_a_learner():
    zt = as_sample([(0, 0), (1, 1), (2, 1), (1, 1)])
    pe = error_oracle(OneInclusionLearner(thresholds(3), kind="fractional").predict)
    lhs, rhs = symmetrization_sides(pe, zt)
    assert lhs == pytest.approx(rhs, abs=1e-12)
