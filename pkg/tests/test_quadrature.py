import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutspline.cutgeom import Side
from cutspline.quadrature import (QuadratureError, build_dwq_rule, build_superset, build_wq_rule, build_wq_rules,
                                  gauss_legendre, standard_activation)
from cutspline.splines import BSplineBasis, KnotVector, integrate_pair, mass_matrix_1d


def test_gauss_small_rules():
    g1 = gauss_legendre(1)
    np.testing.assert_allclose([g1.points[0], g1.weights[0]], [0, 2], atol=1e-15)
    g2 = gauss_legendre(2)
    np.testing.assert_allclose(np.sort(g2.points), [-0.5773502691896258, 0.5773502691896258], rtol=1e-15)
    np.testing.assert_allclose(g2.weights, [1, 1], rtol=1e-15)
    g3 = gauss_legendre(3)
    order = np.argsort(g3.points)
    np.testing.assert_allclose(g3.points[order], [-np.sqrt(0.6), 0, np.sqrt(0.6)], atol=1e-15)
    np.testing.assert_allclose(g3.weights[order], [5 / 9, 8 / 9, 5 / 9], rtol=1e-14)


@pytest.mark.parametrize("n", [0, 65])
def test_gauss_range(n):
    with pytest.raises(ValueError):
        gauss_legendre(n)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 20), k=st.integers(0, 39))
def test_gauss_exactness(n, k):
    deg = k % (2 * n)
    g = gauss_legendre(n)
    exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
    assert g.weights @ g.points**deg == pytest.approx(exact, abs=1e-13)
    assert g.weights.sum() == pytest.approx(2.0, rel=1e-14)


def test_superset_layout():
    b = BSplineBasis.uniform(2, 4, -1, 1)
    s = build_superset(b)
    assert s.size == 12 and s.n_per_span == 3
    assert np.all(np.diff(s.points) > 0)
    one = build_superset(BSplineBasis(KnotVector(1, [0, 0, 0.5, 1, 1])), 1)
    assert one.points[0] == pytest.approx(0.25)
    assert one.weights[0] == pytest.approx(0.5)


def _residual(basis, superset, rule, gram):
    colloc = superset.collocation()
    js = basis.overlapping(rule.index)
    approx = colloc[np.ix_(js, rule.ids)] @ rule.weights
    exact = gram[rule.index, js]
    return np.max(np.abs(approx - exact)) / np.abs(exact).max()


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 6])
@pytest.mark.parametrize("h", [1, 4, 8, 13])
def test_wq_exactness(p, h):
    b = BSplineBasis.uniform(p, h, -1, 1)
    s = build_superset(b)
    G = mass_matrix_1d(b)
    for rule in build_wq_rules(b, s):
        assert _residual(b, s, rule, G) <= 1e-11


def test_single_element_bernstein_escalates():
    b = BSplineBasis(KnotVector(2, [0, 0, 0, 1, 1, 1]))
    s = build_superset(b)
    rule = build_wq_rule(b, s, 0)
    assert rule.gauss_shortcut
    np.testing.assert_allclose(rule.weights, s.weights * s.collocation()[0])
    assert rule.weights @ s.collocation()[1] == pytest.approx(0.1, rel=1e-14)


def test_interior_rule_uses_two_points_per_span():
    b = BSplineBasis.uniform(2, 10, 0, 1)
    s = build_superset(b)
    rule = build_wq_rule(b, s, 5)
    assert not rule.gauss_shortcut
    spans = rule.ids // s.n_per_span
    assert np.bincount(spans).max() <= 2
    assert _residual(b, s, rule, mass_matrix_1d(b)) <= 1e-12


def test_active_points_independent_of_degree():
    counts = []
    for p in (2, 4, 6):
        b = BSplineBasis.uniform(p, 40, 0, 1)
        rule = build_wq_rule(b, build_superset(b), 20)
        counts.append(rule.ids.size / (b.support[20, 1] - b.support[20, 0] + 1))
    assert counts == [2.0, 2.0, 2.0]


def test_constant_reproduction():
    b = BSplineBasis.uniform(3, 9, 0, 3)
    s = build_superset(b)
    for rule in build_wq_rules(b, s):
        t = b.knots
        exact = (t[rule.index + b.p + 1] - t[rule.index]) / (b.p + 1)
        assert rule.weights.sum() == pytest.approx(exact, rel=1e-12)


def _good_side_gram(b, delta, side):
    return mass_matrix_1d(b, lo=delta) if side == Side.ABOVE else mass_matrix_1d(b, hi=delta)


def _dwq_cases():
    for p in range(1, 7):
        for h in (4, 8):
            b = BSplineBasis.uniform(p, h, -1, 1)
            for i in range(b.n):
                lo, hi = b.support[i]
                for knot in b.breaks[lo + 1 : hi + 1]:
                    for side in (Side.BELOW, Side.ABOVE):
                        yield b, i, float(knot), side


def test_dwq_one_sided_exactness_all_cases():
    cache = {}
    for b, i, delta, side in _dwq_cases():
        key = (b.p, b.n_spans)
        if key not in cache:
            cache[key] = (build_superset(b), None)
        s = cache[key][0]
        rule = build_dwq_rule(b, s, i, delta, side)
        colloc = s.collocation()
        js = b.overlapping(i)
        G = _good_side_gram(b, delta, side)
        approx = colloc[np.ix_(js, rule.ids)] @ rule.weights
        scale = np.abs(G[i, js]).max()
        assert np.max(np.abs(approx - G[i, js])) <= 1e-11 * scale
        # no active point on the wrong side
        pts = s.points[rule.ids]
        assert np.all(pts > delta) if side == Side.ABOVE else np.all(pts < delta)


def test_dwq_p3_mid_support_against_integrate_pair():
    b = BSplineBasis.uniform(3, 8, -1, 1)
    s = build_superset(b)
    i = 5
    delta = float(b.breaks[b.support[i, 0] + 2])
    for side, interval in ((Side.ABOVE, (delta, 1.0)), (Side.BELOW, (-1.0, delta))):
        rule = build_dwq_rule(b, s, i, delta, side)
        colloc = s.collocation()
        js = b.overlapping(i)
        assert js.size == 7
        for j in js:
            exact = integrate_pair(b, i, j, interval)
            assert colloc[j, rule.ids] @ rule.weights == pytest.approx(exact, rel=1e-11, abs=1e-14)


def test_dwq_never_integrates_across_delta():
    b = BSplineBasis.uniform(4, 12, 0, 1)
    s = build_superset(b)
    i = 7
    delta = float(b.breaks[b.support[i, 0] + 2])
    rule = build_dwq_rule(b, s, i, delta, Side.ABOVE)
    colloc = s.collocation()
    for j in b.overlapping(i):
        if b.spans[b.support[j, 1], 1] <= delta:
            assert colloc[j, rule.ids] @ rule.weights == 0.0


def test_dwq_nested_points_superset_of_standard():
    b = BSplineBasis.uniform(5, 16, 0, 1)
    s = build_superset(b)
    i = 9
    std = build_wq_rule(b, s, i)
    delta = float(b.breaks[b.support[i, 0] + 2])
    rule = build_dwq_rule(b, s, i, delta, Side.ABOVE, standard=std)
    good_std = std.ids[s.points[std.ids] > delta]
    assert set(good_std) <= set(rule.ids)
    assert set(rule.nested_ids) == set(rule.ids) - set(std.ids)


def test_dwq_shortcut_small_support():
    b = BSplineBasis.uniform(2, 8, 0, 1)
    s = build_superset(b)
    i = 4
    delta = float(b.breaks[b.support[i, 0] + 1])
    rule = build_dwq_rule(b, s, i, delta, Side.BELOW)
    assert rule.gauss_shortcut
    np.testing.assert_allclose(rule.weights, s.weights[rule.ids] * s.collocation()[i, rule.ids])


def test_dwq_rejects_foreign_knot():
    b = BSplineBasis.uniform(2, 8, 0, 1)
    s = build_superset(b)
    with pytest.raises(ValueError):
        build_dwq_rule(b, s, 0, 0.9, Side.ABOVE)


def test_activation_counts_match_heuristic():
    b = BSplineBasis.uniform(3, 10, 0, 1)
    s = build_superset(b)
    ids = standard_activation(b, s, 5)
    # 7 conditions over 4 spans -> 2 points per span
    assert ids.size == 8


def test_quadrature_error_is_runtime_error():
    assert issubclass(QuadratureError, RuntimeError)
