import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cutspline.assembly import SCHEMES, MassFormation
from cutspline.bench import RunConfig, make_target, run_case
from cutspline.cutgeom import BENCHMARK_PLANE, HalfSpaceInterface, TensorSpace, classify
from cutspline.projection import NormalizationError, condition_estimate, eval_field, l2_error, solve_cg
from cutspline.stabilization import apply_stabilization, build_extension



def test_identity_solves_in_one_iteration(rng):
    b = rng.normal(size=40)
    rep = solve_cg(sp.identity(40), b)
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_allclose(rep.coefficients, b, rtol=1e-14)


def test_cg_spd_against_dense_solve(rng):
    A = rng.normal(size=(30, 30))
    A = A @ A.T + 30 * np.eye(30)
    b = rng.normal(size=30)
    rep = solve_cg(A, b)
    assert rep.converged and rep.residual <= 1e-12
    np.testing.assert_allclose(rep.coefficients, np.linalg.solve(A, b), rtol=1e-9)


def test_cg_reports_nonconvergence(rng):
    A = np.diag(np.linspace(1, 1e4, 50))
    rep = solve_cg(A + 0.01 * np.ones((50, 50)), rng.normal(size=50), maxit=2)
    assert rep.iterations == 2 and not rep.converged


def test_cg_input_errors():
    with pytest.raises(ValueError):
        solve_cg(np.eye(3), np.ones(4))
    with pytest.raises(ValueError):
        solve_cg(np.diag([1.0, 0.0, 1.0]), np.ones(3))


def test_zero_rhs():
    rep = solve_cg(np.eye(3), np.zeros(3))
    assert rep.iterations == 0 and not rep.coefficients.any()


@pytest.fixture(scope="module")
def space3():
    return TensorSpace.uniform(3, 2, 4)


def test_eval_field_partition_of_unity(space3, rng):
    x = rng.uniform(-1, 1, (50, 3))
    np.testing.assert_allclose(eval_field(space3, np.ones(space3.n_functions), x), 1.0, atol=1e-14)
    assert np.isclose(eval_field(space3, np.ones(space3.n_functions), np.array([1.0, 1.0, 1.0])), 1.0)


def test_eval_field_single_coefficient(space3, rng):
    x = rng.uniform(-1, 1, (50, 3))
    i = space3.function_index((1, 2, 3))
    c = np.zeros(space3.n_functions)
    c[i] = 1.0
    expect = space3.bases[0](1, x[:, 0]) * space3.bases[1](2, x[:, 1]) * space3.bases[2](3, x[:, 2])
    np.testing.assert_allclose(eval_field(space3, c, x), expect, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(2, 5), seed=st.integers(0, 2**31 - 1), k=st.integers(1, 5))
def test_eval_field_continuous_across_knots(p, seed, k):
    space = TensorSpace.uniform(2, p, 6)
    r = np.random.default_rng(seed)
    c = r.normal(size=space.n_functions)
    knot = space.bases[0].breaks[k]
    y = r.uniform(-1, 1)
    left = eval_field(space, c, np.array([knot - 1e-12, y]))
    right = eval_field(space, c, np.array([knot, y]))
    assert abs(left - right) <= 1e-9 * max(1.0, np.abs(c).max())


def test_l2_error_of_exact_field_is_zero(bench_mesh_p2h4):
    space, mc = bench_mesh_p2h4
    c = np.random.default_rng(3).normal(size=space.n_functions)
    f = lambda *x: eval_field(space, c, np.stack([np.ravel(v) for v in x], axis=1)).reshape(np.shape(x[0]))  # noqa: E731
    assert l2_error(space, mc, c, f) <= 1e-13


def test_l2_error_zero_target_raises(bench_mesh_p2h4):
    space, mc = bench_mesh_p2h4
    with pytest.raises(NormalizationError):
        l2_error(space, mc, np.zeros(space.n_functions), lambda *x: np.zeros(np.shape(x[0])))


def _stabilized_constant_system(p, h):
    space = TensorSpace.uniform(3, p, h)
    mc = classify(space, BENCHMARK_PLANE)
    form = MassFormation(space, mc, "dwq")
    M, _ = form.matrix()
    ext = build_extension(space, mc)
    A, b = apply_stabilization(M, form.rhs(make_target("constant", 3), "gauss"), ext)
    return mc, ext, A, b


def test_constant_target_solution_is_ones():
    # all-ones inner coefficients solve the stabilized system to roundoff
    _, ext, A, b = _stabilized_constant_system(3, 6)
    assert np.abs(A @ np.ones(A.shape[0]) - b).max() <= 1e-14 * np.abs(b).max()
    np.testing.assert_allclose(ext.expand(np.ones(A.shape[0])), 1.0, atol=1e-12)


def test_constant_target_error():
    assert run_case(RunConfig(p=3, h=6, target="constant")).report.error_rel_l2 <= 1e-10


@pytest.mark.xfail(strict=True, reason="CG stops at a 1e-12 relative residual; Jacobi-scaled condition ~1e4 "
                   "and extrapolation weights up to ~500 leave outer coefficients ~1e-7 off; see decisions ledger")
def test_constant_target_coefficients_at_default_tolerance():
    mc, ext, A, b = _stabilized_constant_system(3, 6)
    np.testing.assert_allclose(ext.expand(solve_cg(A, b).coefficients), 1.0, rtol=0, atol=1e-10)


@pytest.mark.parametrize("dim,p", [(3, 2), (2, 3)])
def test_polynomial_reproduction(dim, p):
    rep = run_case(RunConfig(p=p, h=6, dim=dim, target=f"poly:{p}")).report
    assert rep.cg_converged and rep.error_rel_l2 <= 1e-9


def test_iterations_stable_across_h():
    its = [run_case(RunConfig(p=2, h=h)).report.cg_iterations for h in (4, 8, 16)]
    assert max(its) <= 2 * min(its)


@pytest.mark.xfail(strict=True, reason="pre-asymptotic at h=4: measured ratio 13.4 (order 3.75); see decisions ledger")
def test_error_ratio_h4_to_h8():
    e4 = run_case(RunConfig(p=2, h=4)).report.error_rel_l2
    e8 = run_case(RunConfig(p=2, h=8)).report.error_rel_l2
    assert 8 * 0.7 <= e4 / e8 <= 8 * 1.3


def test_error_invariant_across_schemes():
    errs = [run_case(RunConfig(p=2, h=6, scheme=s)).report.error_rel_l2 for s in SCHEMES]
    assert max(errs) - min(errs) <= 1e-10 * errs[0]


def _greville_quasi_interpolant(space, ext, f):
    grev = []
    for b in space.bases:
        t = b.knots
        grev.append(np.array([t[i + 1 : i + b.p + 1].mean() for i in range(b.n)]))
    pts = np.stack([g.ravel() for g in np.meshgrid(*grev, indexing="ij")], axis=1)
    c = f(*pts.T)
    full = np.zeros(space.n_functions)
    full[ext.active] = ext.expand(c[ext.inner])
    return full


@pytest.mark.parametrize("dim,p,h,plane", [
    (3, 2, 6, BENCHMARK_PLANE),
    (2, 3, 8, HalfSpaceInterface(np.array([0.1, 0.2]), np.array([0.5, 0.9]))),
])
def test_projection_beats_quasi_interpolant(dim, p, h, plane):
    space = TensorSpace.uniform(dim, p, h)
    mc = classify(space, plane)
    f = make_target("paper", dim)
    form = MassFormation(space, mc, "dwq")
    M, _ = form.matrix()
    ext = build_extension(space, mc)
    A, b = apply_stabilization(M, form.rhs(f, "gauss"), ext)
    full = np.zeros(space.n_functions)
    full[mc.active] = ext.expand(solve_cg(A, b).coefficients)
    e_proj = l2_error(space, mc, full, f)
    e_qi = l2_error(space, mc, _greville_quasi_interpolant(space, ext, f), f)
    assert e_proj <= e_qi


def test_condition_estimate_against_dense(rng):
    A = rng.normal(size=(40, 40))
    A = A @ A.T + np.eye(40)
    d = np.sqrt(np.diag(A))
    exact = np.linalg.cond(A / np.outer(d, d))
    assert abs(condition_estimate(A, iters=5000, tol=1e-14) - exact) <= 1e-6 * exact
    assert condition_estimate(np.diag([1.0, -1.0])) == float("inf")
