import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cmilab.combinatorics import version_space
from cmilab.core import (
    ContinuousSpec,
    Example,
    FiniteClass,
    Halfspace,
    as_sample,
    derive_seed,
    draw_sample,
    empirical_risk,
    point_functions,
    thresholds,
    uniform_over_domain,
)
from cmilab.learners import (
    HalfspaceOut,
    LeakingERM,
    LeastElementERM,
    PredictOne,
    SVMLearner,
    ThresholdLearner,
    ThresholdOut,
    VersionSpaceReleaser,
    check_stability,
    first_element_scheme,
    leaking_erm,
    least_element_erm,
    make_learner,
    margin_of,
    predict_one_improper,
    svm_fit,
    svm_max_margin,
    svm_scheme,
    threshold_learner,
    threshold_scheme,
    version_space_releaser,
)

from oracles import svm_qp

INTERVAL = ContinuousSpec("uniform-interval", threshold=0.5)


def box(d, margin=0.1):
    return ContinuousSpec("uniform-box", low=-1, high=1, halfspace=Halfspace(tuple([1.0] + [0.5] * (d - 1)), 0.1), margin=margin)


# thresholds


def test_threshold_examples():
    assert threshold_learner(as_sample([(3, 0), (5, 1), (7, 1)])) == ThresholdOut(5)
    out = threshold_learner(as_sample([(3, 0), (8, 0)]))
    assert out.position == math.inf and out(1e9) == 0


def test_threshold_rejects_unrealizable():
    with pytest.raises(ValueError):
        threshold_learner(as_sample([(5, 1), (7, 0)]))


def test_threshold_stability_example():
    s = as_sample([(3, 0), (5, 1), (7, 1)])
    res = check_stability(threshold_scheme(), s)
    assert res.stable and res.exhaustive
    assert threshold_learner(s[:2]) == threshold_learner(s[1:]) == threshold_learner(s)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 12))
def test_threshold_scheme_stable(seed, n):
    s = draw_sample(INTERVAL, n, seed)
    res = check_stability(threshold_scheme(), s)
    assert res.stable and res.exhaustive


def test_unstable_scheme_detected():
    s = as_sample([(0.1, 0), (0.9, 1)])
    res = check_stability(first_element_scheme(), s)
    assert not res.stable
    assert res.witness is not None


# SVM


def test_svm_examples():
    out = svm_max_margin(as_sample([((-1.0,), 0), ((1.0,), 1)]))
    assert out == HalfspaceOut((1.0,), 0.0)
    assert margin_of(out, as_sample([((-1.0,), 0), ((1.0,), 1)])) == pytest.approx(1.0)
    out2 = svm_max_margin(as_sample([((0.0, -1.0), 0), ((0.0, 1.0), 1)]))
    assert out2 == HalfspaceOut((0.0, 1.0), 0.0)


def test_svm_rejects_degenerate():
    with pytest.raises(ValueError):
        svm_max_margin(as_sample([((0.0,), 0), ((0.0,), 1)]))
    with pytest.raises(ValueError):
        svm_max_margin(as_sample([((0.0,), 0), ((1.0,), 1), ((2.0,), 0)]))


def test_svm_single_class_is_constant():
    out = svm_max_margin(as_sample([((0.2, 0.3), 1), ((0.5, 0.1), 1)]))
    assert all(out(x) == 1 for x in [(0.0, 0.0), (5.0, -3.0)])


@pytest.mark.parametrize("d", [1, 2, 3])
def test_svm_matches_generic_optimizer(d):
    for i in range(15):
        s = draw_sample(box(d), 12, derive_seed(d, i))
        if len({y for _, y in s}) < 2:
            continue
        out, support = svm_fit(s)
        w, b = svm_qp(s)
        assert np.allclose(out.w, w, atol=1e-5)
        assert out.b == pytest.approx(b, abs=1e-5)
        assert len(support) <= d + 1
        assert empirical_risk(out, s) == 0


def test_svm_support_count_d2():
    for i in range(50):
        s = draw_sample(box(2), 15, derive_seed(99, i))
        _, support = svm_fit(s)
        assert len(support) <= 3


@pytest.mark.parametrize("d", [1, 2])
def test_svm_scheme_stable(d):
    for i in range(10):
        s = draw_sample(box(d), 9, derive_seed(7 + d, i))
        assert check_stability(svm_scheme(d), s).stable


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 50.0))
def test_svm_scaling_and_canonical(seed, c):
    s = draw_sample(box(2), 8, seed)
    assume(len({y for _, y in s}) == 2)
    out = svm_max_margin(s)
    scaled = svm_max_margin(tuple(Example(tuple(c * v for v in x), y) for x, y in s))
    assert np.allclose(scaled.w, out.w, atol=1e-9)
    assert scaled.b == pytest.approx(c * out.b, rel=1e-8, abs=1e-9)
    # equal halfspaces written with different positive scale share an encoding
    again = HalfspaceOut.canonical(np.array(out.w) * 3.7, out.b * 3.7)
    assert np.allclose(again.w, out.w, atol=1e-11) and again.b == pytest.approx(out.b, abs=1e-11)
    assert svm_max_margin(s[::-1]) == out


# finite classes


def test_least_element_examples():
    cls = thresholds(6)
    assert least_element_erm(cls, ()).index == 0
    s = as_sample([(2, 0), (4, 1)])
    vs = version_space(cls, s)
    assert least_element_erm(cls, s).index == min(vs.members)
    with pytest.raises(ValueError):
        least_element_erm(cls, as_sample([(4, 0), (2, 1)]))


def test_least_element_picks_minimum():
    # version space {2, 5, 7} in a class built for it
    rows = np.eye(8, dtype=np.uint8)
    rows[0] = 0
    rows[[2, 5, 7], 0] = 1
    cls = FiniteClass(rows)
    assert version_space(cls, as_sample([(0, 0)])).members == (0, 1, 3, 4, 6)
    s = as_sample([(0, 1), (1, 0)])
    assert version_space(cls, s).members == (2, 5, 7)
    assert least_element_erm(cls, s).index == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 9), st.integers(0, 2**31), st.integers(1, 6))
def test_least_element_permutation_invariant(m, seed, n):
    cls = thresholds(m)
    s = draw_sample(uniform_over_domain(cls, m // 2), n, seed)
    ref = least_element_erm(cls, s)
    for p in permutations(s):
        assert least_element_erm(cls, p) == ref


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 9), st.integers(0, 2**31), st.integers(0, 8), st.integers(0, 8))
def test_least_element_depends_on_version_space_only(m, seed, a, b):
    cls = point_functions(m)
    dist = uniform_over_domain(cls, 0)
    s, t = draw_sample(dist, a, seed), draw_sample(dist, b, seed + 7)
    if version_space(cls, s) == version_space(cls, t):
        assert least_element_erm(cls, s) == least_element_erm(cls, t)
    assert version_space_releaser(cls, s).vs == version_space(cls, s)


def test_version_space_releaser_examples():
    pf = point_functions(3)
    assert version_space_releaser(pf, ()).vs.members == (0, 1, 2, 3)
    assert version_space_releaser(pf, as_sample([(0, 0)])).vs.members == (0, 2, 3)
    a = version_space_releaser(pf, as_sample([(0, 0), (0, 0)]))
    assert a == version_space_releaser(pf, as_sample([(0, 0)]))
    assert hash(a) == hash(version_space_releaser(pf, as_sample([(0, 0)])))


# negative controls


def test_leaking_erm_examples():
    out = leaking_erm(as_sample([(3, 0), (5, 1)]))
    assert 4.99 < out.position <= 5 and out(5) == 1 and out(3) == 0
    out = leaking_erm(as_sample([(3, 0), (8, 0)]))
    assert 9.0 <= out.position < 9.01
    with pytest.raises(ValueError):
        leaking_erm(as_sample([(5, 1), (6, 0)]))


def test_leaking_erm_separates_training_sets():
    seen = {}
    for i in range(300):
        s = draw_sample(INTERVAL, 4, derive_seed(3, i))
        seen.setdefault(leaking_erm(s), set()).add(tuple(sorted(s)))
    assert all(len(v) == 1 for v in seen.values())


def test_predict_one_examples():
    s = as_sample([(1, 0), (2, 1)])
    assert predict_one_improper(s, [1, 2, 3]).labels == (0, 1, 1)
    with pytest.raises(ValueError):
        predict_one_improper(as_sample([(1, 0), (1, 1)]), [1])


# consistency of every consistent learner


LEARNER_CASES = [
    (ThresholdLearner(), INTERVAL),
    (LeakingERM(), INTERVAL),
    (SVMLearner(), box(2)),
    (LeastElementERM(thresholds(12)), uniform_over_domain(thresholds(12), 6)),
    (PredictOne(), uniform_over_domain(point_functions(10), 0)),
]


@pytest.mark.parametrize("learner,dist", LEARNER_CASES, ids=lambda v: getattr(v, "name", ""))
def test_consistent_learners_fit_training_data(learner, dist):
    assert learner.consistent
    for i in range(1000 if learner.name != "svm" else 200):
        s = draw_sample(dist, 6, derive_seed(11, i))
        evals = [x for x, _ in s] if learner.transductive else None
        for out, p in learner.train(s, evals).items():
            assert p > 0
            if learner.transductive:
                assert all(lab == y for lab, (_, y) in zip(out.labels, s))
            else:
                assert empirical_risk(out, s) == 0


def test_registry():
    cls = thresholds(4)
    for name in ("threshold", "svm", "least-erm", "version-space", "leaking-erm", "predict-one", "oig", "oig-singleton"):
        assert make_learner(name, cls).name == name
    with pytest.raises(ValueError):
        make_learner("least-erm")
    with pytest.raises(ValueError):
        make_learner("nope", cls)
    assert isinstance(make_learner("version-space", cls), VersionSpaceReleaser)
