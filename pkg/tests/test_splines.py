import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.interpolate import BSpline

from cutspline.splines import (BSplineBasis, KnotVector, insert_knot, integrate_function, integrate_pair,
                               make_open_uniform_knots, mass_matrix_1d)


def scipy_basis(basis, i):
    c = np.zeros(basis.n)
    c[i] = 1.0
    return BSpline(basis.knots, c, basis.p, extrapolate=False)


def test_uniform_knots_p2_h4():
    kv = make_open_uniform_knots(2, 4, -1, 1)
    np.testing.assert_allclose(kv.knots, [-1, -1, -1, -0.5, 0, 0.5, 1, 1, 1])
    assert kv.n == 6


def test_uniform_knots_small_and_large():
    assert list(make_open_uniform_knots(1, 1, 0, 1).knots) == [0, 0, 1, 1]
    b = BSplineBasis(make_open_uniform_knots(6, 32, -1, 1))
    assert b.n == 38 and b.n_spans == 32


@pytest.mark.parametrize("args", [(0, 4, 0, 1), (2, 0, 0, 1), (2, 4, 1, 1)])
def test_uniform_knots_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        make_open_uniform_knots(*args)


def test_knot_vector_must_be_open():
    with pytest.raises(ValueError):
        KnotVector(2, [0, 0, 0.5, 1, 1, 1])
    with pytest.raises(ValueError):
        KnotVector(1, [0, 0, 0.5, 0.5, 0.5, 1, 1])


def test_eval_hat_functions():
    b = BSplineBasis(KnotVector(1, [0, 0, 1, 1]))
    first, vals = b.eval_nonzero(0.25)
    assert first == 0
    np.testing.assert_allclose(vals, [0.75, 0.25])


def test_eval_bernstein():
    b = BSplineBasis(KnotVector(2, [0, 0, 0, 1, 1, 1]))
    first, vals = b.eval_nonzero(0.5)
    assert first == 0
    np.testing.assert_allclose(vals, [0.25, 0.5, 0.25])


def test_eval_right_end_uses_last_span():
    b = BSplineBasis.uniform(3, 5, 0, 1)
    first, vals = b.eval_nonzero(1.0)
    assert first == b.n - b.p - 1
    np.testing.assert_allclose(vals, [0, 0, 0, 1], atol=1e-15)


def test_eval_outside_domain_raises():
    b = BSplineBasis.uniform(2, 4, 0, 1)
    with pytest.raises(ValueError):
        b.eval_nonzero(1.5)


@pytest.mark.parametrize("p,h", [(1, 3), (2, 5), (4, 7), (6, 9)])
def test_eval_matches_scipy(p, h, rng):
    b = BSplineBasis.uniform(p, h, -1, 1)
    x = rng.uniform(-1, 1, 200)
    B = b.collocation(x)
    for i in range(b.n):
        np.testing.assert_allclose(B[i], np.nan_to_num(scipy_basis(b, i)(x)), atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 6), h=st.integers(1, 12), x=st.floats(0, 1))
def test_partition_of_unity_and_nonnegativity(p, h, x):
    b = BSplineBasis.uniform(p, h, 0, 1)
    _, vals = b.eval_nonzero(x)
    assert abs(vals.sum() - 1) <= 1e-13
    assert vals.min() >= -1e-14


def test_insert_knot_p1_example():
    b = BSplineBasis(KnotVector(1, [0, 0, 1, 1]))
    r, S = insert_knot(b, 0.5, 2)
    np.testing.assert_allclose(r.knots, [0, 0, 0.5, 0.5, 1, 1])
    assert r.n == 4
    np.testing.assert_allclose(S.toarray()[:, 0], [1, 0.5, 0.5, 0])
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(1 - x, S.toarray()[:, 0] @ r.collocation(x), atol=1e-14)


def test_insert_existing_full_multiplicity_is_noop():
    b = BSplineBasis(KnotVector(2, [0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1]))
    r, S = insert_knot(b, 0.5, 3)
    np.testing.assert_array_equal(r.knots, b.knots)
    np.testing.assert_array_equal(S.toarray(), np.eye(b.n))


def test_insert_knot_rejects_boundary():
    b = BSplineBasis.uniform(2, 4, 0, 1)
    with pytest.raises(ValueError):
        insert_knot(b, 0.0, 1)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(1, 5), h=st.integers(2, 8), k=st.integers(1, 7), mult=st.integers(1, 6), seed=st.integers(0, 99))
def test_refinement_identity(p, h, k, mult, seed):
    b = BSplineBasis.uniform(p, h, 0, 1)
    value = b.breaks[1 + k % (h - 1)]
    m = 1 + mult % (p + 1)
    r, S = insert_knot(b, value, m)
    assert np.count_nonzero(np.isclose(r.knots, value)) == max(m, 1)
    x = np.random.default_rng(seed).uniform(0, 1, 100)
    np.testing.assert_allclose(b.collocation(x), S.T @ r.collocation(x), atol=1e-12)
    np.testing.assert_allclose(S @ np.ones(b.n), np.ones(r.n), atol=1e-14)


def test_full_multiplicity_splits_basis():
    b = BSplineBasis.uniform(3, 6, 0, 1)
    r, _ = insert_knot(b, 0.5, 4)
    # no refined function straddles the C^-1 knot
    lo = r.spans[r.support[:, 0], 0]
    hi = r.spans[r.support[:, 1], 1]
    assert np.all((hi <= 0.5 + 1e-14) | (lo >= 0.5 - 1e-14))


def test_integrate_pair_examples():
    b = BSplineBasis(KnotVector(1, [0, 0, 1, 2, 2]))
    assert integrate_pair(b, 0, 1) == pytest.approx(1 / 6, rel=1e-14)
    b2 = BSplineBasis.uniform(2, 8, 0, 1)
    assert integrate_pair(b2, 0, 7) == 0.0
    bern = BSplineBasis(KnotVector(2, [0, 0, 0, 1, 1, 1]))
    assert integrate_pair(bern, 0, 1) == pytest.approx(0.1, rel=1e-14)


@pytest.mark.parametrize("p", [2, 3, 5])
def test_integrate_pair_against_adaptive_quadrature(p):
    b = BSplineBasis.uniform(p, 5, -1, 1)
    for i, j in [(0, 0), (1, 2), (p, p + 1), (b.n - 1, b.n - 2)]:
        fi, fj = scipy_basis(b, i), scipy_basis(b, j)
        ref, _ = quad(lambda x: np.nan_to_num(fi(x) * fj(x)), -1, 1, points=b.breaks[1:-1], epsabs=1e-15)
        assert integrate_pair(b, i, j) == pytest.approx(ref, rel=1e-11, abs=1e-15)


def test_integral_symmetry_and_row_sums():
    b = BSplineBasis.uniform(3, 7, 0, 2)
    G = mass_matrix_1d(b)
    for i in range(b.n):
        for j in b.overlapping(i):
            assert integrate_pair(b, i, j) == integrate_pair(b, j, i)
        assert G[i].sum() == pytest.approx(integrate_function(b, i), rel=1e-13)


def test_one_sided_gram_adds_up():
    b = BSplineBasis.uniform(2, 6, 0, 1)
    G = mass_matrix_1d(b)
    np.testing.assert_allclose(mass_matrix_1d(b, hi=0.5) + mass_matrix_1d(b, lo=0.5), G, atol=1e-15)
