"""L2 projection on the cut domain: Jacobi-preconditioned CG, field evaluation and errors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cutcell import build_cut_cell_rule
from .cutgeom import MeshClassification, TensorSpace
from .quadrature import gauss_legendre
from .splines import tensor_evaluate


class NormalizationError(ZeroDivisionError):
    """The target has (numerically) zero norm on the domain."""


@dataclass
class SolveReport:
    coefficients: np.ndarray
    iterations: int
    residual: float
    converged: bool
    full_coefficients: np.ndarray | None = None


def solve_cg(A, b: np.ndarray, tol: float = 1e-12, maxit: int | None = None, x0=None) -> SolveReport:
    """Conjugate gradients with Jacobi preconditioning.

    Stops when the preconditioned residual norm ``sqrt(r.z)`` drops below
    ``tol`` times its value for the zero initial guess.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match right-hand side of length {n}")
    maxit = 10 * n if maxit is None else int(maxit)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError("Jacobi preconditioner needs a positive diagonal")
    dinv = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    rz = float(r @ z)
    ref = float(np.sqrt(b @ (dinv * b)))
    if ref == 0.0:
        return SolveReport(np.zeros(n), 0, 0.0, True)
    res = np.sqrt(max(rz, 0.0)) / ref
    it = 0
    pdir = z.copy()
    while res > tol and it < maxit:
        Ap = A @ pdir
        alpha = rz / float(pdir @ Ap)
        x += alpha * pdir
        r -= alpha * Ap
        z = dinv * r
        rz_new = float(r @ z)
        pdir = z + (rz_new / rz) * pdir
        rz = rz_new
        it += 1
        res = np.sqrt(max(rz, 0.0)) / ref
    return SolveReport(x, it, float(res), bool(res <= tol))


def eval_field(space: TensorSpace, coefficients: np.ndarray, x, chunk: int = 65536) -> np.ndarray:
    """Spline field ``sum_i c_i B_i`` at points ``x`` of shape (m, dim) or (dim,)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    x = np.atleast_2d(x)
    C = np.asarray(coefficients, dtype=float).reshape(space.shape)
    local = np.meshgrid(*[np.arange(b.p + 1) for b in space.bases], indexing="ij")
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk):
        xs = x[start : start + chunk]
        firsts, vals = zip(*[b.eval_nonzero(xs[:, d]) for d, b in enumerate(space.bases)])
        N = np.ones((xs.shape[0], 1))
        for v in vals:
            N = (N[:, :, None] * v[:, None, :]).reshape(xs.shape[0], -1)
        idx = tuple(firsts[d][:, None] + local[d].ravel()[None, :] for d in range(space.dim))
        out[start : start + chunk] = np.einsum("mk,mk->m", N, C[idx])
    return out[0] if scalar else out


def _element_values(space: TensorSpace, C: np.ndarray, elems: np.ndarray, order: int):
    """Field values, points and weights of an ``order``^d Gauss rule on each element in ``elems``."""
    g = gauss_legendre(order)
    pts, wts, vals, firsts = [], [], [], []
    for d, b in enumerate(space.bases):
        spans = b.spans[elems[:, d]]
        half = 0.5 * (spans[:, 1] - spans[:, 0])
        x = half[:, None] * g.points + 0.5 * (spans[:, 0] + spans[:, 1])[:, None]
        pts.append(x)
        wts.append(half[:, None] * g.weights)
        v = np.stack([b.values_on_span(s, xs) for s, xs in zip(elems[:, d], x)])  # (ne, q, p+1)
        vals.append(v)
        firsts.append(np.array([b.first_function(s) for s in elems[:, d]]))
    dim = space.dim
    # local coefficient blocks (ne, p+1, ..., p+1)
    grids = np.meshgrid(*[np.arange(b.p + 1) for b in space.bases], indexing="ij")
    idx = tuple(firsts[d][:, None] + grids[d].ravel()[None, :] for d in range(dim))
    blocks = C[idx].reshape((len(elems),) + tuple(b.p + 1 for b in space.bases))
    fun = "abc"[:dim]
    q = "xyz"[:dim]
    u = np.einsum(f"e{fun}," + ",".join(f"e{qq}{ff}" for qq, ff in zip(q, fun)) + f"->e{q}", blocks, *vals)
    mesh = [np.broadcast_to(pts[d].reshape((len(elems),) + tuple(order if k == d else 1 for k in range(dim))),
                            u.shape) for d in range(dim)]
    w = np.ones(u.shape)
    for d in range(dim):
        w = w * wts[d].reshape((len(elems),) + tuple(order if k == d else 1 for k in range(dim)))
    return u.reshape(len(elems), -1), [m.reshape(len(elems), -1) for m in mesh], w.reshape(len(elems), -1)


def l2_error(space: TensorSpace, classification: MeshClassification, coefficients: np.ndarray, f,
             cut_rules: dict | None = None, cut_order: int | None = None, chunk: int = 2048) -> float:
    """Relative L2 error ``||u - f|| / ||f||`` over the domain.

    ``coefficients`` holds one value per function of ``space`` (exterior
    entries are ignored). Interior elements use (p+2)^d Gauss points, cut
    elements the cut-cell rules.
    """
    C = np.asarray(coefficients, dtype=float).reshape(space.shape)
    order = max(space.degrees) + 2
    num = den = 0.0
    elems = np.array(classification.interior_elements, dtype=np.int64).reshape(-1, space.dim)
    for start in range(0, len(elems), chunk):
        u, X, w = _element_values(space, C, elems[start : start + chunk], order)
        fv = f(*X)
        num += float(np.sum(w * (u - fv) ** 2))
        den += float(np.sum(w * fv**2))
    if cut_rules is None:
        q = cut_order if cut_order is not None else 3 * max(space.degrees) + 2
        cut_rules = {e: build_cut_cell_rule(space.element_box(e), classification.plane, q, e)
                     for e in classification.cut_elements}
    for e, rule in cut_rules.items():
        if rule.weights.size == 0:
            continue
        tabs = rule.tables if rule.tables is not None else space.element_tables(e, rule.points)
        sl = tuple(slice(b.first_function(e[d]), b.first_function(e[d]) + b.p + 1) for d, b in enumerate(space.bases))
        u = tensor_evaluate(C[sl], tabs)
        fv = f(*rule.points.T)
        num += float(rule.weights @ (u - fv) ** 2)
        den += float(rule.weights @ fv**2)
    if den < 1e-300:
        raise NormalizationError("target function has zero L2 norm on the domain")
    return float(np.sqrt(num / den))


def condition_estimate(A, iters: int = 500, tol: float = 1e-10, seed: int = 0) -> float:
    """Condition number of the Jacobi-scaled SPD matrix ``D^-1/2 A D^-1/2``.

    The largest eigenvalue comes from power iteration, the smallest from
    inverse iteration with a sparse LU factorization. A matrix whose
    diagonal is not strictly positive in floating point is reported as
    infinitely ill-conditioned.
    """
    A = sp.csc_matrix(A)
    diag = A.diagonal()
    if np.any(diag <= 0):
        return float("inf")
    s = 1.0 / np.sqrt(diag)
    As = sp.csc_matrix(sp.diags(s) @ A @ sp.diags(s))
    rng = np.random.default_rng(seed)
    n = As.shape[0]

    def power(apply):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            wv = apply(v)
            lam_new = float(v @ wv)
            v = wv / np.linalg.norm(wv)
            if abs(lam_new - lam) <= tol * abs(lam_new):
                lam = lam_new
                break
            lam = lam_new
        return lam

    lmax = power(lambda v: As @ v)
    lu = spla.splu(As)
    inv_max = power(lu.solve)
    return float(lmax * inv_max)
