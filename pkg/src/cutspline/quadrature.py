"""Gauss rules, the shared Gauss-point superset and (discontinuous) weighted quadrature.

All univariate rules address points of a :class:`PointSuperset`: the
element-wise Gauss points of every span. Weighted quadrature (WQ) rules absorb
the test function into the weights and use a subset of these points; the
discontinuous variant (DWQ) integrates only one side of an artificial C^-1
knot. Because every rule lives on the same superset, point evaluations are
shared between Gauss, WQ and DWQ.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .cutgeom import Side
from .splines import BSplineBasis, insert_knot, mass_matrix_1d

WQ_TOL = 1e-11


class QuadratureError(RuntimeError):
    """A weighted quadrature rule could not be made exact."""


@dataclass(frozen=True)
class GaussRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.points.size


def gauss_legendre(n: int) -> GaussRule:
    """n-point Gauss-Legendre rule on [-1, 1]."""
    if not 1 <= n <= 64:
        raise ValueError(f"number of Gauss points must be in [1, 64], got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    return GaussRule(x, w)


@dataclass(frozen=True, eq=False)
class PointSuperset:
    """Gauss points of all spans of a basis, ``n_per_span`` per span.

    Point ``span * n_per_span + local`` is the ``local``-th Gauss point of ``span``.
    """

    basis: BSplineBasis
    n_per_span: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def span(self) -> np.ndarray:
        return np.arange(self.size) // self.n_per_span

    def ids(self, span_lo: int, span_hi: int) -> np.ndarray:
        """All point ids of spans ``span_lo..span_hi`` (inclusive)."""
        m = self.n_per_span
        return np.arange(span_lo * m, (span_hi + 1) * m)

    def collocation(self) -> np.ndarray:
        """Values of all basis functions at all points, shape (n, size)."""
        return self.basis.collocation(self.points)


def build_superset(basis: BSplineBasis, n_per_span: int | None = None) -> PointSuperset:
    m = basis.p + 1 if n_per_span is None else int(n_per_span)
    if m < 1:
        raise ValueError("n_per_span must be >= 1")
    g = gauss_legendre(m)
    lo, hi = basis.spans[:, :1], basis.spans[:, 1:]
    pts = (0.5 * (hi - lo) * g.points + 0.5 * (hi + lo)).ravel()
    wts = (0.5 * (hi - lo) * g.weights).ravel()
    return PointSuperset(basis, m, pts, wts)


@dataclass(frozen=True, eq=False)
class WQRule:
    """Weighted quadrature rule of test function ``index``: ``sum_q w_q B_j(x_q) = int B_i B_j``."""

    index: int
    ids: np.ndarray
    weights: np.ndarray
    gauss_shortcut: bool = False


@dataclass(frozen=True, eq=False)
class DWQRule(WQRule):
    """One-sided weighted quadrature rule; weights on the wrong side of ``delta`` are zero."""

    delta: float = 0.0
    side: Side = Side.ABOVE
    subdivision: sp.csr_matrix | None = None
    nested_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _spread(m: int, p: int) -> np.ndarray:
    """m local indices out of p+1, spread from first to last."""
    if m >= p + 1:
        return np.arange(p + 1)
    return np.unique(np.round(np.arange(m) * p / (m - 1)).astype(int))


def standard_activation(basis: BSplineBasis, superset: PointSuperset, i: int) -> np.ndarray:
    """Point ids used by the WQ rule of test function ``i``."""
    p = basis.p
    lo, hi = basis.support[i]
    k = hi - lo + 1
    m_cond = basis.overlapping(i).size
    m = min(p + 1, max(2, -(-m_cond // k)))
    local = _spread(m, superset.n_per_span - 1)
    spans = np.arange(lo, hi + 1)
    return (spans[:, None] * superset.n_per_span + local[None, :]).ravel()


def _fit(values: np.ndarray, rhs: np.ndarray):
    """Minimum-norm least-squares weights and the relative residual."""
    w, *_ = np.linalg.lstsq(values, rhs, rcond=None)
    res = np.abs(values @ w - rhs)
    scale = np.maximum(np.abs(rhs), np.abs(rhs).max())
    return w, float(np.max(res / scale)) if rhs.size else 0.0


def build_wq_rule(basis: BSplineBasis, superset: PointSuperset, i: int,
                  colloc: np.ndarray | None = None, gram: np.ndarray | None = None) -> WQRule:
    """Weighted quadrature rule for one test function by moment fitting.

    Escalates to the Gauss weights times the test function values when the
    reduced point set cannot reproduce the moments.
    """
    colloc = superset.collocation() if colloc is None else colloc
    gram = mass_matrix_1d(basis) if gram is None else gram
    js = basis.overlapping(i)
    ids = standard_activation(basis, superset, i)
    w, res = _fit(colloc[np.ix_(js, ids)], gram[i, js])
    if res <= WQ_TOL and ids.size < superset.ids(*basis.support[i]).size:
        return WQRule(i, ids, w)
    ids = superset.ids(*basis.support[i])
    w = superset.weights[ids] * colloc[i, ids]
    check = np.max(np.abs(colloc[np.ix_(js, ids)] @ w - gram[i, js])) / np.abs(gram[i, js]).max()
    if check > WQ_TOL:
        raise QuadratureError(f"Gauss fallback inexact for function {i} (residual {check:.2e})")
    return WQRule(i, ids, w, gauss_shortcut=True)


def build_wq_rules(basis: BSplineBasis, superset: PointSuperset) -> list[WQRule]:
    """Standard WQ rule for every test function of ``basis``."""
    colloc = superset.collocation()
    gram = mass_matrix_1d(basis)
    return [build_wq_rule(basis, superset, i, colloc, gram) for i in range(basis.n)]


def build_dwq_rule(basis: BSplineBasis, superset: PointSuperset, i: int, delta: float, side: Side,
                   colloc: np.ndarray | None = None, standard: WQRule | None = None) -> DWQRule:
    """Discontinuous WQ rule of test function ``i`` for the part of its support on ``side`` of ``delta``.

    A C^-1 knot is inserted at ``delta``; the refined good-side functions act
    like functions next to an open boundary, so their activation follows the
    standard heuristic in the refined basis. Their weights are fitted in the
    refined space and mapped back with the subdivision matrix.
    """
    lo, hi = basis.support[i]
    tol = 1e-12 * np.ptp(basis.domain)
    inner_knots = basis.breaks[lo + 1 : hi + 1]
    hit = np.nonzero(np.abs(inner_knots - delta) <= tol)[0]
    if hit.size == 0:
        raise ValueError(f"delta={delta} is not an interior knot of supp(B_{i})")
    d_span = lo + 1 + int(hit[0])  # first span above delta
    delta = float(basis.breaks[d_span])
    good = (d_span, hi) if side == Side.ABOVE else (lo, d_span - 1)

    colloc = superset.collocation() if colloc is None else colloc
    if standard is None:
        standard = build_wq_rule(basis, superset, i, colloc)
    std_span = standard.ids // superset.n_per_span
    std_good = standard.ids[(std_span >= good[0]) & (std_span <= good[1])]

    refined, S, rcolloc, rgram = _refined(basis, superset, delta)
    col = S[:, [i]].toarray().ravel()
    # the breakpoints are unchanged by inserting an existing knot, so refined
    # span numbers coincide with the original ones
    ks = [k for k in np.nonzero(col)[0]
          if good[0] <= refined.support[k, 0] and refined.support[k, 1] <= good[1]]

    active = set(std_good.tolist())
    for k in ks:
        active.update(standard_activation(refined, superset, k).tolist())
    active = np.array(sorted(active), dtype=int)
    nested = np.setdiff1d(active, standard.ids)
    good_ids = superset.ids(*good)

    if np.array_equal(active, good_ids):
        w = superset.weights[good_ids] * colloc[i, good_ids]
        return DWQRule(i, good_ids, w, True, delta, side, S, nested)

    weights = np.zeros(superset.size)
    used = set(active.tolist())
    for k in ks:
        k_ids = superset.ids(*refined.support[k])
        pts = np.intersect1d(active, k_ids)
        ls = refined.overlapping(k)
        wk, res = _fit(rcolloc[np.ix_(ls, pts)], rgram[k, ls])
        if res > WQ_TOL:
            pts = k_ids
            wk = superset.weights[pts] * rcolloc[k, pts]
            used.update(pts.tolist())
        weights[pts] += col[k] * wk
    ids = np.array(sorted(used), dtype=int)
    nested = np.setdiff1d(ids, standard.ids)
    if np.array_equal(ids, good_ids):
        # escalation filled every good-side span: the Gauss weights are exact
        w = superset.weights[good_ids] * colloc[i, good_ids]
        return DWQRule(i, good_ids, w, True, delta, side, S, nested)
    return DWQRule(i, ids, weights[ids], False, delta, side, S, nested)


@lru_cache(maxsize=512)
def _refined(basis: BSplineBasis, superset: PointSuperset, delta: float):
    refined, S = insert_knot(basis, delta, basis.p + 1)
    return refined, S, refined.collocation(superset.points), mass_matrix_1d(refined)
