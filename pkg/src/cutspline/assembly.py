"""Mass matrix and load vector formation on cut tensor-product B-spline meshes.

Three schemes share one Gauss-point superset and one coefficient grid:

``ref``
    element loop with (p+1)^d Gauss points on every interior element.
``hybrid``
    row assembly; interior test functions use weighted quadrature, the
    regular support of cut test functions uses Gauss points with sum
    factorization.
``dwq``
    as ``hybrid`` but the regular support of cut test functions uses a
    discontinuous weighted quadrature rule in the split direction and the
    standard weighted quadrature rules in the others.

Cut elements are always integrated element-wise with the cut-cell rules.
"""
from __future__ import annotations

import time
from collections import Counter
import dataclasses
from dataclasses import asdict, dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .cutcell import build_cut_cell_rule
from .cutgeom import MeshClassification, SupportSplit, Tag, TensorSpace, find_all_splits
from .quadrature import (DWQRule, PointSuperset, WQRule, build_dwq_rule, build_superset,
                         build_wq_rule)
from .splines import BSplineBasis, mass_matrix_1d, tensor_moments

SCHEMES = ("ref", "hybrid", "dwq")


@dataclass
class TimingBreakdown:
    """Seconds spent per component (Q = prep_wq, I = prep_input)."""

    prep_wq: float = 0.0
    prep_input: float = 0.0
    interior_rows: float = 0.0
    cut_regular: float = 0.0
    cut_elements: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def fastest(cls, runs: list["TimingBreakdown"]) -> "TimingBreakdown":
        """Component-wise minimum over repeated runs."""
        return cls(**{k: min(getattr(r, k) for r in runs) for k in cls.__dataclass_fields__})


@dataclass(frozen=True, eq=False)
class CoefficientGrid:
    """Scalar field sampled on the tensor grid of all superset points."""

    supersets: tuple[PointSuperset, ...]
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class SparseRowMatrix:
    """CSR matrix over the active (non-exterior) functions.

    ``active[r]`` is the lexicographic index of the function of row/column r.
    """

    matrix: sp.csr_matrix
    active: np.ndarray
    n_functions: int

    @property
    def shape(self):
        return self.matrix.shape

    def active_index(self) -> np.ndarray:
        """Map from global function index to row number (-1 for exterior functions)."""
        out = np.full(self.n_functions, -1, dtype=np.int64)
        out[self.active] = np.arange(self.active.size)
        return out

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def export_matrix_market(self, path) -> None:
        scipy.io.mmwrite(str(path), self.matrix, symmetry="general", precision=17)


def evaluate_field(space: TensorSpace, supersets, c) -> np.ndarray:
    """Values of ``c`` on the superset tensor grid.

    ``c`` may be None (constant one), a number, or a callable taking one
    coordinate array per direction.
    """
    shape = tuple(s.size for s in supersets)
    if c is None:
        return np.ones(shape)
    if np.isscalar(c):
        return np.full(shape, float(c))
    grids = np.meshgrid(*[s.points for s in supersets], indexing="ij")
    vals = np.broadcast_to(np.asarray(c(*grids), dtype=float), shape).copy()
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("coefficient field has non-finite values on the quadrature grid")
    return vals


def precompute_input(space: TensorSpace, supersets, c=None) -> CoefficientGrid:
    return CoefficientGrid(tuple(supersets), evaluate_field(space, supersets, c))


def form_row_sumfac(rules, trials, coeff: np.ndarray, colloc, counter: Counter | None = None,
                    key: str = "rows") -> np.ndarray:
    """Row block ``M[i, j]`` by successive one-dimensional contractions.

    ``rules[d] = (ids, weights)`` is the test-function rule in direction d
    (weights already include the test function), ``trials[d] = (jlo, jhi)``
    the trial index range and ``colloc[d]`` the basis values on the superset.
    Direction 0 is contracted first; the result has shape (J_0, ..., J_d-1).
    """
    X = coeff[np.ix_(*[ids for ids, _ in rules])]
    mults = 0
    for d, ((ids, w), (jlo, jhi)) in enumerate(zip(rules, trials)):
        W = colloc[d][jlo : jhi + 1, ids] * w
        mults += X.size * W.shape[0] + W.size
        X = np.tensordot(X, W, axes=(0, 1))
    if counter is not None:
        counter[key] += mults
    return X


def _row_load(rules, fvals: np.ndarray) -> float:
    X = fvals[np.ix_(*[ids for ids, _ in rules])]
    for _, w in rules:
        X = np.tensordot(w, X, axes=(0, 0))
    return float(X)


class _RowStore:
    """Dense per-row blocks over the neighbor box of each active test function."""

    def __init__(self, space: TensorSpace, active: np.ndarray, nb_lo, nb_hi):
        self.space = space
        self.active = active
        multi = np.array(np.unravel_index(active, space.shape)).T.reshape(-1, space.dim)
        self.lo = np.stack([nb_lo[d][multi[:, d]] for d in range(space.dim)], axis=1)
        self.shape = np.stack([nb_hi[d][multi[:, d]] for d in range(space.dim)], axis=1) - self.lo + 1
        sizes = np.prod(self.shape, axis=1)
        self.offset = np.concatenate([[0], np.cumsum(sizes)])
        self.strides = np.ones_like(self.shape)
        for d in range(space.dim - 2, -1, -1):
            self.strides[:, d] = self.strides[:, d + 1] * self.shape[:, d + 1]
        self.data = np.zeros(int(self.offset[-1]))
        self.row_of = np.full(space.n_functions, -1, dtype=np.int64)
        self.row_of[active] = np.arange(active.size)

    def view(self, r: int) -> np.ndarray:
        return self.data[self.offset[r] : self.offset[r + 1]].reshape(self.shape[r])

    def add(self, r: int, trials, block: np.ndarray) -> None:
        lo = self.lo[r]
        sl = tuple(slice(jlo - lo[d], jhi - lo[d] + 1) for d, (jlo, jhi) in enumerate(trials))
        self.view(r)[sl] += block

    def scatter(self, first, p, local: np.ndarray) -> None:
        """Add an element matrix over the (p_d+1)-tuples of functions starting at ``first``."""
        grids = np.meshgrid(*[first[d] + np.arange(p[d] + 1) for d in range(self.space.dim)], indexing="ij")
        glob = np.ravel_multi_index(tuple(g.ravel() for g in grids), self.space.shape)
        rows = self.row_of[glob]
        cols = np.stack([g.ravel() for g in grids], axis=1)  # (nloc, d)
        rel = cols[None, :, :] - self.lo[rows][:, None, :]
        idx = self.offset[rows][:, None] + np.sum(rel * self.strides[rows][:, None, :], axis=2)
        self.data[idx.ravel()] += local.ravel()

    def scatter_rows(self, rows: np.ndarray, firsts: np.ndarray, p, blocks: np.ndarray) -> None:
        """Add row blocks over the (p_d+1)-tuples of trial functions starting at ``firsts[k]`` to row ``rows[k]``."""
        grids = np.meshgrid(*[np.arange(q + 1) for q in p], indexing="ij")
        local = np.stack([g.ravel() for g in grids], axis=1)  # (nloc, d)
        strides = self.strides[rows]
        base = self.offset[rows] + np.sum((firsts - self.lo[rows]) * strides, axis=1)
        idx = base[:, None] + strides @ local.T
        np.add.at(self.data, idx.ravel(), blocks.ravel())

    def to_matrix(self) -> SparseRowMatrix:
        col_map = np.full(self.space.n_functions, -1, dtype=np.int64)
        col_map[self.active] = np.arange(self.active.size)
        indptr = [0]
        indices, values = [], []
        for r in range(self.active.size):
            axes = [np.arange(self.lo[r, d], self.lo[r, d] + self.shape[r, d]) for d in range(self.space.dim)]
            glob = np.ravel_multi_index(np.ix_(*axes), self.space.shape).ravel()
            cols = col_map[glob]
            vals = self.data[self.offset[r] : self.offset[r + 1]]
            keep = (cols >= 0) & (vals != 0.0)
            indices.append(cols[keep])
            values.append(vals[keep])
            indptr.append(indptr[-1] + int(keep.sum()))
        n = self.active.size
        M = sp.csr_matrix((np.concatenate(values) if values else np.zeros(0),
                           np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
                           np.array(indptr)), shape=(n, n))
        return SparseRowMatrix(M, self.active.copy(), self.space.n_functions)


def _tensor_values(tables):
    """(ne, prod nq, prod nfun) products of per-direction tables of shape (ne, nfun_d, nq_d)."""
    d = len(tables)
    fun = "abc"[:d]
    pts = "xyz"[:d]
    spec = ",".join(f"e{f}{q}" for f, q in zip(fun, pts)) + f"->e{pts}{fun}"
    out = np.einsum(spec, *tables)
    ne = out.shape[0]
    nq = int(np.prod(out.shape[1 : d + 1]))
    return out.reshape(ne, nq, -1)


class MassFormation:
    """Prepared rules and data for forming the mass matrix and loads with one scheme.

    Construction performs the rule preparation (timed as ``prep_wq``);
    :meth:`matrix` evaluates the coefficient grid (``prep_input``) and runs
    the row or element loops.
    """

    def __init__(self, space: TensorSpace, classification: MeshClassification, scheme: str = "dwq",
                 splits: dict | None = None, cut_order: int | None = None):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        if classification.function_tags is None:
            raise ValueError("classification lacks function tags")
        self.space = space
        self.classification = classification
        self.scheme = scheme
        self.p = space.degrees
        self.cut_order = cut_order if cut_order is not None else 3 * max(self.p) + 2
        self.timing = TimingBreakdown()
        self.active = classification.active
        self.interior_functions = classification.functions_with(Tag.INTERIOR)
        self.cut_functions = classification.functions_with(Tag.CUT)
        if scheme != "ref" and splits is None:
            splits = find_all_splits(space, classification)
        self.splits = splits or {}

        t0 = time.perf_counter()
        self.supersets = tuple(build_superset(b) for b in space.bases)
        self.colloc = tuple(s.collocation() for s in self.supersets)
        self.nb_lo, self.nb_hi = [], []
        for b in space.bases:
            lo = np.array([b.overlapping(i).min() for i in range(b.n)])
            hi = np.array([b.overlapping(i).max() for i in range(b.n)])
            self.nb_lo.append(lo)
            self.nb_hi.append(hi)
        t1 = time.perf_counter()
        self.wq: tuple = ()
        self.dwq: dict = {}
        if scheme != "ref":
            self.wq = tuple(_wq_all(b, s, col) for b, s, col in zip(space.bases, self.supersets, self.colloc))
            if scheme == "dwq":
                for multi, split in self.splits.items():
                    if split.is_empty:
                        continue
                    key = (split.split_dir, multi[split.split_dir], split.delta, split.side)
                    if key not in self.dwq:
                        d, i, delta, side = key
                        b = space.bases[d]
                        self.dwq[key] = build_dwq_rule(b, self.supersets[d], i, delta, side,
                                                       self.colloc[d], self.wq[d][i])
            self.timing.prep_wq = time.perf_counter() - t0
        else:
            # basis evaluation at the Gauss points is part of the input for the element loop
            self.timing.prep_input = t1 - t0
        self._cut_rules: dict = {}

    # ------------------------------------------------------------------ rules per direction
    def _gauss_rule(self, d: int, i: int, span_lo: int, span_hi: int):
        ids = self.supersets[d].ids(span_lo, span_hi)
        w = self.supersets[d].weights[ids] * self.colloc[d][i, ids]
        b = self.space.bases[d]
        trial = (b.first_function(span_lo), b.first_function(span_hi) + b.p)
        return (ids, w), trial

    def _wq_rule(self, d: int, i: int):
        r = self.wq[d][i]
        return (r.ids, r.weights), (self.nb_lo[d][i], self.nb_hi[d][i])

    def _dwq_rule(self, split: SupportSplit):
        d = split.split_dir
        r: DWQRule = self.dwq[(d, split.function[d], split.delta, split.side)]
        b = self.space.bases[d]
        lo, hi = split.regular_box[d]
        return (r.ids, r.weights), (b.first_function(lo), b.first_function(hi) + b.p)

    def cut_row_pieces(self, multi, leftover: bool = True) -> list:
        """Quadrature pieces covering the non-cut part of the support of cut function ``multi``.

        With ``leftover=False`` only the regular box is returned; the leftover
        interior elements are then handled by :meth:`_leftover_rows`.
        """
        split: SupportSplit = self.splits[multi]
        dim = self.space.dim
        pieces = []
        if not split.is_empty:
            if self.scheme == "dwq":
                piece = [self._dwq_rule(split) if d == split.split_dir else self._wq_rule(d, multi[d])
                         for d in range(dim)]
            else:
                piece = [self._gauss_rule(d, multi[d], *split.regular_box[d]) for d in range(dim)]
            pieces.append(piece)
        if leftover:
            for e in split.leftover_interior:
                pieces.append([self._gauss_rule(d, multi[d], e[d], e[d]) for d in range(dim)])
        return pieces

    def _tables(self):
        if not hasattr(self, "_tabs"):
            self._tabs = [_span_tables(b, s, col) for b, s, col in zip(self.space.bases, self.supersets, self.colloc)]
        return self._tabs

    def _leftover_pairs(self):
        """(test function, element) pairs of all leftover interior elements, in row order."""
        if not hasattr(self, "_pairs"):
            fun, elem = [], []
            for multi in self.cut_functions:
                for e in self.splits[multi].leftover_interior:
                    fun.append(multi)
                    elem.append(e)
            dim = self.space.dim
            self._pairs = (np.array(fun, dtype=np.int64).reshape(-1, dim),
                           np.array(elem, dtype=np.int64).reshape(-1, dim))
        return self._pairs

    def _leftover_rows(self, store: "_RowStore", coeff: np.ndarray, counter: Counter | None, chunk: int = 2048):
        """Element-wise Gauss integrals of the leftover interior elements of cut rows.

        Each (test function, element) pair is sum-factorized over the element's
        (p+1)^d Gauss points; pairs are processed in batches.
        """
        fun, elem = self._leftover_pairs()
        dim = self.space.dim
        tabs = self._tables()
        for start in range(0, len(fun), chunk):
            I, E = fun[start : start + chunk], elem[start : start + chunk]
            n = len(I)
            X = _gather_grid(coeff, [tabs[d][2][E[:, d]] for d in range(dim)])
            X = X.reshape((n,) + tuple(tabs[d][2].shape[1] for d in range(dim)))
            mults = 0
            firsts = np.empty((n, dim), dtype=np.int64)
            for d, b in enumerate(self.space.bases):
                V = tabs[d][0][E[:, d]]  # (n, p+1, nq)
                firsts[:, d] = b.span_knot[E[:, d]] - b.p
                t = V[np.arange(n), I[:, d] - firsts[:, d]] * tabs[d][1][E[:, d]]
                A = V * t[:, None, :]
                mults += A.size + X.size * A.shape[1]
                # contract the leading grid axis and append the local axis
                rest = X.shape[2:]
                X = (X.reshape(n, X.shape[1], -1).transpose(0, 2, 1) @ A.transpose(0, 2, 1)).reshape((n,) + rest + (A.shape[1],))
            if counter is not None:
                counter["cut_regular"] += mults
            rows = store.row_of[np.ravel_multi_index(tuple(I.T), self.space.shape)]
            store.scatter_rows(rows, firsts, self.p, X.reshape(n, -1))

    # ------------------------------------------------------------------ cut elements
    def cut_rules(self, order: int | None = None) -> dict:
        order = self.cut_order if order is None else order
        if order not in self._cut_rules:
            plane = self.classification.plane
            self._cut_rules[order] = {
                e: build_cut_cell_rule(self.space.element_box(e), plane, order, e)
                for e in self.classification.cut_elements
            }
        return self._cut_rules[order]

    def cache_cut_tables(self, order: int | None = None) -> None:
        """Attach basis value tables to the cut rules for repeated loads and error evaluations."""
        rules = self.cut_rules(order)
        for e, rule in rules.items():
            if rule.tables is None:
                rules[e] = dataclasses.replace(rule, tables=tuple(self.cut_element_tables(e, rule.points)))

    def _legendre_tables(self):
        if not hasattr(self, "_leg"):
            self._leg = [_legendre_products(b) for b in self.space.bases]
        return self._leg

    def cut_element_matrix(self, e, rule, c=None, counter: Counter | None = None) -> np.ndarray:
        """Local matrix over the (p+1)^d functions of cut element ``e``.

        The products B_a B_a' of each direction are expanded exactly in
        Legendre polynomials on the element, so only the moments of the
        clipped cell against Legendre triples need the cut-cell rule; the
        local matrix then follows by sum factorization.
        """
        box = self.space.element_box(e)
        K = [self._legendre_tables()[d][e[d]] for d in range(self.space.dim)]
        xi = [(2 * rule.points[:, d] - box[d, 0] - box[d, 1]) / (box[d, 1] - box[d, 0])
              for d in range(self.space.dim)]
        w = rule.weights if c is None else rule.weights * c(*rule.points.T)
        V = [np.polynomial.legendre.legvander(x, K[d].shape[2] - 1) for d, x in enumerate(xi)]
        mu = _moments(w, V)
        X = mu
        mults = rule.weights.size * int(np.prod([v.shape[1] for v in V]))
        for Kd in K:
            mults += X.size * Kd.shape[0] * Kd.shape[1]
            X = np.tensordot(X, Kd, axes=(0, 2))
        if counter is not None:
            counter["cut_elements"] += mults
        dim = self.space.dim
        # axes are (a0, a0', a1, a1', ...) -> (a0, a1, ..., a0', a1', ...)
        X = X.transpose([2 * k for k in range(dim)] + [2 * k + 1 for k in range(dim)])
        nloc = int(np.prod([k.shape[0] for k in K]))
        return X.reshape(nloc, nloc)

    def cut_element_tables(self, e, points) -> list:
        """Per-direction values of the functions of element ``e`` at ``points`` (each (m, p+1))."""
        return self.space.element_tables(e, points)

    def cut_element_values(self, e, points) -> np.ndarray:
        """Values of the (p+1)^d functions of element ``e`` at ``points``, shape (m, nloc)."""
        N = np.ones((points.shape[0], 1))
        for v in self.cut_element_tables(e, points):
            N = (N[:, :, None] * v[:, None, :]).reshape(N.shape[0], -1)
        return N

    def cut_element_load(self, e, rule, f) -> np.ndarray:
        tabs = rule.tables if rule.tables is not None else self.cut_element_tables(e, rule.points)
        return tensor_moments(rule.weights * f(*rule.points.T), tabs)

    def _element_first(self, e):
        return [b.first_function(k) for b, k in zip(self.space.bases, e)]

    # ------------------------------------------------------------------ matrix
    def matrix(self, c=None, counter: Counter | None = None,
               parts=("interior", "cut_regular", "cut_elements")) -> tuple[SparseRowMatrix, TimingBreakdown]:
        """Assemble the matrix; ``parts`` restricts the work to some components (for instrumentation)."""
        unknown = set(parts) - {"interior", "cut_regular", "cut_elements"}
        if unknown:
            raise ValueError(f"unknown parts {sorted(unknown)}")
        timing = TimingBreakdown(prep_wq=self.timing.prep_wq, prep_input=self.timing.prep_input)
        t_start = time.perf_counter()
        t0 = time.perf_counter()
        coeff = precompute_input(self.space, self.supersets, c).values
        timing.prep_input += time.perf_counter() - t0
        store = _RowStore(self.space, self.active, self.nb_lo, self.nb_hi)

        t0 = time.perf_counter()
        if "interior" not in parts:
            pass
        elif self.scheme == "ref":
            self._element_loop(store, coeff, counter)
        else:
            for multi in self.interior_functions:
                rules, trials = zip(*[self._wq_rule(d, multi[d]) for d in range(self.space.dim)])
                r = store.row_of[self.space.function_index(multi)]
                store.view(r)[...] = form_row_sumfac(rules, trials, coeff, self.colloc, counter, "interior")
        timing.interior_rows = time.perf_counter() - t0

        t0 = time.perf_counter()
        if self.scheme != "ref" and "cut_regular" in parts:
            for multi in self.cut_functions:
                r = store.row_of[self.space.function_index(multi)]
                for piece in self.cut_row_pieces(multi, leftover=False):
                    rules, trials = zip(*piece)
                    store.add(r, trials, form_row_sumfac(rules, trials, coeff, self.colloc, counter, "cut_regular"))
            self._leftover_rows(store, coeff, counter)
        timing.cut_regular = time.perf_counter() - t0

        t0 = time.perf_counter()
        for e, rule in (self.cut_rules().items() if "cut_elements" in parts else ()):
            if rule.weights.size == 0:
                continue
            store.scatter(self._element_first(e), self.p, self.cut_element_matrix(e, rule, c, counter))
        timing.cut_elements = time.perf_counter() - t0

        M = store.to_matrix()
        timing.total = time.perf_counter() - t_start + timing.prep_wq + self.timing.prep_input
        return M, timing

    def _element_loop(self, store: _RowStore, coeff: np.ndarray, counter: Counter | None, chunk_entries: int = 4_000_000):
        elems = np.array(self.classification.interior_elements, dtype=np.int64).reshape(-1, self.space.dim)
        if elems.size == 0:
            return
        nq = [s.n_per_span for s in self.supersets]
        nloc = int(np.prod([p + 1 for p in self.p]))
        npts = int(np.prod(nq))
        tabs = [_span_tables(b, s, col) for b, s, col in zip(self.space.bases, self.supersets, self.colloc)]
        chunk = max(1, chunk_entries // (npts * nloc))
        for start in range(0, len(elems), chunk):
            E = elems[start : start + chunk]
            N = _tensor_values([tabs[d][0][E[:, d]] for d in range(self.space.dim)])
            w = _tensor_weights([tabs[d][1][E[:, d]] for d in range(self.space.dim)])
            w = w * _gather_grid(coeff, [tabs[d][2][E[:, d]] for d in range(self.space.dim)])
            local = np.matmul((N * w[:, :, None]).transpose(0, 2, 1), N)
            if counter is not None:
                counter["interior"] += len(E) * (npts * nloc + npts * nloc * nloc)
            for k, e in enumerate(E):
                store.scatter(self._element_first(e), self.p, local[k])

    # ------------------------------------------------------------------ loads
    def rhs(self, f, rules: str = "scheme") -> np.ndarray:
        """Load vector int_Omega B_i f over the active functions.

        ``rules="scheme"`` uses the same decomposition and rules as the matrix;
        ``rules="gauss"`` integrates every non-cut element with Gauss points
        regardless of the scheme.
        """
        if rules not in ("scheme", "gauss"):
            raise ValueError(f"rules must be 'scheme' or 'gauss', got {rules!r}")
        fvals = evaluate_field(self.space, self.supersets, f)
        row_of = np.full(self.space.n_functions, -1, dtype=np.int64)
        row_of[self.active] = np.arange(self.active.size)
        b = np.zeros(self.active.size)
        fn = f if callable(f) else (lambda *x: np.full(np.shape(x[0]), 1.0 if f is None else float(f)))
        if self.scheme == "ref" or rules == "gauss":
            self._element_loads(b, row_of, fvals)
        else:
            for multi in self.interior_functions:
                rules = [self._wq_rule(d, multi[d])[0] for d in range(self.space.dim)]
                b[row_of[self.space.function_index(multi)]] += _row_load(rules, fvals)
            for multi in self.cut_functions:
                r = row_of[self.space.function_index(multi)]
                for piece in self.cut_row_pieces(multi):
                    b[r] += _row_load([rule for rule, _ in piece], fvals)
        for e, rule in self.cut_rules().items():
            if rule.weights.size == 0:
                continue
            local = self.cut_element_load(e, rule, fn)
            grids = np.meshgrid(*[f0 + np.arange(p + 1) for f0, p in zip(self._element_first(e), self.p)], indexing="ij")
            glob = np.ravel_multi_index(tuple(g.ravel() for g in grids), self.space.shape)
            np.add.at(b, row_of[glob], local)
        return b

    def _element_loads(self, b, row_of, fvals):
        elems = np.array(self.classification.interior_elements, dtype=np.int64).reshape(-1, self.space.dim)
        if elems.size == 0:
            return
        tabs = [_span_tables(bb, s, col) for bb, s, col in zip(self.space.bases, self.supersets, self.colloc)]
        for start in range(0, len(elems), 256):
            E = elems[start : start + 256]
            N = _tensor_values([tabs[d][0][E[:, d]] for d in range(self.space.dim)])
            w = _tensor_weights([tabs[d][1][E[:, d]] for d in range(self.space.dim)])
            w = w * _gather_grid(fvals, [tabs[d][2][E[:, d]] for d in range(self.space.dim)])
            local = np.einsum("eqa,eq->ea", N, w)
            for k, e in enumerate(E):
                grids = np.meshgrid(*[f0 + np.arange(p + 1) for f0, p in zip(self._element_first(e), self.p)],
                                    indexing="ij")
                glob = np.ravel_multi_index(tuple(g.ravel() for g in grids), self.space.shape)
                b[row_of[glob]] += local[k]


# ---------------------------------------------------------------------- helpers

def _wq_all(basis, superset, colloc) -> list[WQRule]:
    gram = mass_matrix_1d(basis)
    return [build_wq_rule(basis, superset, i, colloc, gram) for i in range(basis.n)]


def _span_tables(basis: BSplineBasis, superset: PointSuperset, colloc: np.ndarray):
    """Per span: nonzero basis values (p+1, nq), Gauss weights (nq,) and point ids (nq,)."""
    vals, wts, ids = [], [], []
    for s in range(basis.n_spans):
        q = superset.ids(s, s)
        f0 = basis.first_function(s)
        vals.append(colloc[f0 : f0 + basis.p + 1, q])
        wts.append(superset.weights[q])
        ids.append(q)
    return np.array(vals), np.array(wts), np.array(ids)


def _tensor_weights(ws):
    out = ws[0]
    for w in ws[1:]:
        out = (out[:, :, None] * w[:, None, :]).reshape(out.shape[0], -1)
    return out


def _gather_grid(grid: np.ndarray, ids):
    d = len(ids)
    idx = []
    for k, q in enumerate(ids):
        shape = [q.shape[0]] + [1] * d
        shape[k + 1] = q.shape[1]
        idx.append(q.reshape(shape))
    return grid[tuple(idx)].reshape(ids[0].shape[0], -1)


def _legendre_products(basis: BSplineBasis) -> np.ndarray:
    """Per span, Legendre coefficients of all products B_a B_a' (shape (n_spans, p+1, p+1, 2p+1))."""
    p = basis.p
    deg = 2 * p
    xg, wg = np.polynomial.legendre.leggauss(deg + 1)
    V = np.polynomial.legendre.legvander(xg, deg)  # (ng, deg+1)
    scale = (2 * np.arange(deg + 1) + 1) / 2.0
    out = np.empty((basis.n_spans, p + 1, p + 1, deg + 1))
    for s, (lo, hi) in enumerate(basis.spans):
        x = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        _, vals = basis.eval_nonzero(x)  # (ng, p+1)
        prod = vals[:, :, None] * vals[:, None, :]
        out[s] = np.einsum("gab,g,gr->abr", prod, wg, V) * scale
    return out


def _moments(w: np.ndarray, V: list, chunk: int = 8192) -> np.ndarray:
    """sum_q w_q prod_d V_d[q, r_d] as a d-dimensional array."""
    dims = [v.shape[1] for v in V]
    if len(V) == 1:
        return w @ V[0]
    mu = np.zeros(int(np.prod(dims[:-1])) * dims[-1])
    mu = mu.reshape(-1, dims[-1])
    for s in range(0, w.size, chunk):
        A = w[s : s + chunk, None] * V[0][s : s + chunk]
        for v in V[1:-1]:
            A = (A[:, :, None] * v[s : s + chunk, None, :]).reshape(A.shape[0], -1)
        mu += A.T @ V[-1][s : s + chunk]
    return mu.reshape(dims)


def assemble_ref_gauss(space, classification, c=None, cut_order=None, counter=None):
    form = MassFormation(space, classification, "ref", cut_order=cut_order)
    return form.matrix(c, counter)


def assemble_hybrid(space, classification, splits=None, c=None, cut_order=None, counter=None):
    form = MassFormation(space, classification, "hybrid", splits, cut_order)
    return form.matrix(c, counter)


def assemble_dwq(space, classification, splits=None, c=None, cut_order=None, counter=None):
    form = MassFormation(space, classification, "dwq", splits, cut_order)
    return form.matrix(c, counter)


def assemble(space, classification, scheme, splits=None, c=None, cut_order=None, counter=None):
    return MassFormation(space, classification, scheme, splits, cut_order).matrix(c, counter)


def build_rhs(space, classification, f, scheme="dwq", splits=None, cut_order=None, rules="scheme") -> np.ndarray:
    return MassFormation(space, classification, scheme, splits, cut_order).rhs(f, rules)
