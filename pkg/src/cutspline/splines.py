"""Univariate B-spline bases on open knot vectors.

Evaluation uses the Cox-de Boor recursion, knot insertion follows Boehm's
algorithm and records the subdivision matrix. Pairwise integrals are computed
with per-span Gauss-Legendre rules of p+1 points, which is exact for the
degree-2p products and serves as the oracle for the quadrature module.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class KnotVector:
    """Open knot vector of degree ``degree``."""

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        p = int(self.degree)
        t = np.asarray(self.knots, dtype=float)
        if p < 1:
            raise ValueError(f"degree must be >= 1, got {p}")
        if t.ndim != 1 or t.size < 2 * (p + 1):
            raise ValueError("knot vector too short for the degree")
        if np.any(np.diff(t) < 0):
            raise ValueError("knots must be nondecreasing")
        if not (np.all(t[: p + 1] == t[0]) and np.all(t[-p - 1 :] == t[-1])):
            raise ValueError("knot vector must be open (end knots repeated p+1 times)")
        if t[p + 1] == t[0] or t[-p - 2] == t[-1]:
            raise ValueError("end knots must repeat exactly p+1 times")
        if t[0] >= t[-1]:
            raise ValueError("empty parametric domain")
        _, counts = np.unique(t[p + 1 : -p - 1], return_counts=True)
        if counts.size and counts.max() > p + 1:
            raise ValueError("interior knot multiplicity exceeds p+1")
        t.setflags(write=False)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", t)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def n(self) -> int:
        return self.knots.size - self.degree - 1


def make_open_uniform_knots(p: int, h: int, a: float = 0.0, b: float = 1.0) -> KnotVector:
    """Open knot vector with ``h`` uniform spans on [a, b] and simple interior knots."""
    if p < 1 or h < 1 or not a < b:
        raise ValueError(f"invalid arguments p={p}, h={h}, [a, b]=[{a}, {b}]")
    inner = np.linspace(a, b, h + 1)
    knots = np.concatenate([np.full(p, a), inner, np.full(p, b)])
    return KnotVector(p, knots)


@dataclass(frozen=True, eq=False)
class BSplineBasis:
    """B-spline basis over an open knot vector.

    Spans are the nonempty knot intervals, numbered from 0. ``support[i]`` is
    the inclusive range of span indices covering supp(B_i).
    """

    kv: KnotVector
    breaks: np.ndarray = field(init=False, repr=False)
    span_knot: np.ndarray = field(init=False, repr=False)
    support: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = self.kv.knots
        p = self.kv.degree
        # knot index mu of each nonempty span [t_mu, t_mu+1)
        mus = np.nonzero(np.diff(t) > 0)[0]
        breaks = np.append(t[mus], t[-1])
        support = np.empty((self.kv.n, 2), dtype=int)
        for i in range(self.kv.n):
            inside = (mus >= i) & (mus <= i + p)
            idx = np.nonzero(inside)[0]
            support[i] = idx[0], idx[-1]
        for arr in (breaks, mus, support):
            arr.setflags(write=False)
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "span_knot", mus)
        object.__setattr__(self, "support", support)

    @classmethod
    def uniform(cls, p: int, h: int, a: float = 0.0, b: float = 1.0) -> "BSplineBasis":
        return cls(make_open_uniform_knots(p, h, a, b))

    @property
    def p(self) -> int:
        return self.kv.degree

    @property
    def knots(self) -> np.ndarray:
        return self.kv.knots

    @property
    def n(self) -> int:
        return self.kv.n

    @property
    def n_spans(self) -> int:
        return self.span_knot.size

    @property
    def domain(self) -> tuple[float, float]:
        return self.kv.domain

    @cached_property
    def spans(self) -> np.ndarray:
        """(n_spans, 2) array of span end points."""
        return np.column_stack([self.breaks[:-1], self.breaks[1:]])

    def first_function(self, span: int) -> int:
        """Index of the first of the p+1 functions nonzero on ``span``."""
        return int(self.span_knot[span]) - self.p

    def find_span(self, x) -> np.ndarray:
        """Span index of each x; the right end point belongs to the last span."""
        x = np.asarray(x, dtype=float)
        a, b = self.domain
        tol = 1e-13 * (b - a)
        if np.any(x < a - tol) or np.any(x > b + tol):
            raise ValueError("evaluation point outside the parametric domain")
        s = np.searchsorted(self.breaks, x, side="right") - 1
        return np.clip(s, 0, self.n_spans - 1)

    def eval_nonzero(self, x):
        """First index and the p+1 values of the nonvanishing functions at ``x``.

        Works on scalars and arrays; for array input returns arrays of shape
        (m,) and (m, p+1).
        """
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        span = self.find_span(x)
        mu = self.span_knot[span]
        vals = _cox_de_boor(self.knots, self.p, mu, x)
        first = mu - self.p
        if scalar:
            return int(first[0]), vals[0]
        return first, vals

    def values_on_span(self, span: int, x) -> np.ndarray:
        """Values of the p+1 functions of ``span`` at x (polynomial pieces, no span lookup)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return _cox_de_boor_span(self.knots, self.p, int(self.span_knot[span]), x)

    def collocation(self, x) -> np.ndarray:
        """Dense matrix of all basis values, shape (n, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        first, vals = self.eval_nonzero(x)
        out = np.zeros((self.n, x.size))
        cols = np.arange(x.size)
        for a in range(self.p + 1):
            out[first + a, cols] = vals[:, a]
        return out

    def __call__(self, i: int, x) -> np.ndarray:
        """Value of B_i at x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        first, vals = self.eval_nonzero(x)
        k = i - first
        ok = (k >= 0) & (k <= self.p)
        out = np.zeros(x.size)
        out[ok] = vals[ok, k[ok]]
        return out

    def overlapping(self, i: int) -> np.ndarray:
        """Indices j whose support shares at least one span with B_i."""
        lo, hi = self.support[i]
        js = np.nonzero((self.support[:, 0] <= hi) & (self.support[:, 1] >= lo))[0]
        return js


def _cox_de_boor(t, p, mu, x):
    """Nonzero basis values on span mu for each x (vectorized triangle scheme)."""
    m = x.size
    N = np.zeros((m, p + 1))
    N[:, 0] = 1.0
    left = np.empty((m, p + 1))
    right = np.empty((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[mu + 1 - j]
        right[:, j] = t[mu + j] - x
        saved = np.zeros(m)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def _cox_de_boor_span(t, p, mu, x):
    """Same triangle scheme as :func:`_cox_de_boor` for one span (scalar knots)."""
    m = x.size
    N = np.empty((m, p + 1))
    N[:, 0] = 1.0
    left = [None] * (p + 1)
    right = [None] * (p + 1)
    for j in range(1, p + 1):
        left[j] = x - t[mu + 1 - j]
        right[j] = t[mu + j] - x
        saved = 0.0
        for r in range(j):
            temp = N[:, r] / (right[r + 1] + left[j - r])
            N[:, r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        N[:, j] = saved
    return N


def tensor_moments(weights: np.ndarray, tables) -> np.ndarray:
    """``sum_m w_m prod_d V_d[m, a_d]`` for per-direction tables V_d of shape (m, n_d).

    Returns the flattened tensor in lexicographic order (first direction slowest).
    """
    X = np.asarray(weights)[:, None] * tables[0]
    if len(tables) == 1:
        return X.sum(axis=0)
    m = X.shape[0]
    for V in tables[1:-1]:
        X = (X[:, :, None] * V[:, None, :]).reshape(m, -1)
    return (X.T @ tables[-1]).ravel()


def tensor_evaluate(block: np.ndarray, tables) -> np.ndarray:
    """``sum_a block[a] prod_d V_d[m, a_d]`` for one coefficient block and per-direction tables."""
    m = tables[0].shape[0]
    if len(tables) == 1:
        return tables[0] @ block
    Y = tables[-1] @ block.reshape(-1, tables[-1].shape[1]).T  # (m, prod of leading sizes)
    X = tables[0]
    for V in tables[1:-1]:
        X = (X[:, :, None] * V[:, None, :]).reshape(m, -1)
    return np.einsum("mk,mk->m", X, Y)


def insert_knot(basis: BSplineBasis, value: float, target_multiplicity: int):
    """Raise the multiplicity of ``value`` to ``target_multiplicity``.

    Returns the refined basis and the subdivision matrix S (CSR, shape
    (n_refined, n)) with B_i = sum_k S[k, i] * B~_k.
    """
    p = basis.p
    a, b = basis.domain
    tol = 1e-12 * (b - a)
    if not (a + tol < value < b - tol):
        raise ValueError(f"knot {value} must lie strictly inside ({a}, {b})")
    if target_multiplicity < 1 or target_multiplicity > p + 1:
        raise ValueError("target multiplicity must be in [1, p+1]")
    t = basis.knots.copy()
    close = np.abs(t - value) <= tol
    if np.any(close):
        value = float(t[close][0])
    mult = int(np.count_nonzero(close))
    S = sp.identity(basis.n, format="csr")
    for _ in range(max(0, target_multiplicity - mult)):
        t, step = _insert_once(t, p, value)
        S = (step @ S).tocsr()
    if target_multiplicity < mult:
        raise ValueError("knot removal is not supported")
    return BSplineBasis(KnotVector(p, t)), S


def _insert_once(t, p, u):
    n = t.size - p - 1
    mu = int(np.searchsorted(t, u, side="right")) - 1
    rows, cols, vals = [], [], []
    for k in range(n + 1):
        if k <= mu - p:
            alpha = 1.0
        elif k >= mu + 1:
            alpha = 0.0
        else:
            alpha = (u - t[k]) / (t[k + p] - t[k])
        if k < n and alpha != 0.0:
            rows.append(k), cols.append(k), vals.append(alpha)
        if k >= 1 and alpha != 1.0:
            rows.append(k), cols.append(k - 1), vals.append(1.0 - alpha)
    step = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))
    return np.insert(t, mu + 1, u), step


def _span_rule(basis: BSplineBasis, npts: int):
    xg, wg = np.polynomial.legendre.leggauss(npts)
    lo, hi = basis.spans[:, :1], basis.spans[:, 1:]
    x = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * wg
    return x, w


def mass_matrix_1d(basis: BSplineBasis, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Dense matrix of int B_i B_j over [lo, hi] (default: whole domain).

    ``lo``/``hi`` must be breakpoints; used for one-sided integrals.
    """
    x, w = _span_rule(basis, basis.p + 1)
    keep = np.ones(basis.n_spans, dtype=bool)
    if lo is not None:
        keep &= basis.spans[:, 0] >= lo - 1e-12 * np.ptp(basis.domain)
    if hi is not None:
        keep &= basis.spans[:, 1] <= hi + 1e-12 * np.ptp(basis.domain)
    x, w = x[keep].ravel(), w[keep].ravel()
    B = basis.collocation(x)
    return (B * w) @ B.T


def integrate_pair(basis: BSplineBasis, i: int, j: int, interval: tuple[float, float] | None = None) -> float:
    """Exact value of int B_i B_j, optionally restricted to a span-aligned interval."""
    lo_s = max(basis.support[i, 0], basis.support[j, 0])
    hi_s = min(basis.support[i, 1], basis.support[j, 1])
    if lo_s > hi_s:
        return 0.0
    x, w = _span_rule(basis, basis.p + 1)
    x, w = x[lo_s : hi_s + 1], w[lo_s : hi_s + 1]
    if interval is not None:
        mid = x.mean(axis=1)
        keep = (mid > interval[0]) & (mid < interval[1])
        x, w = x[keep], w[keep]
    x, w = x.ravel(), w.ravel()
    # symmetric in (i, j): the product is formed elementwise before the sum
    return float(np.sum(w * (basis(i, x) * basis(j, x))))


def integrate_function(basis: BSplineBasis, i: int) -> float:
    """int B_i = (t_{i+p+1} - t_i) / (p+1)."""
    t = basis.knots
    return float((t[i + basis.p + 1] - t[i]) / (basis.p + 1))
