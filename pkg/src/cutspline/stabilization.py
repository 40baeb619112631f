"""Extended B-splines.

Outer functions (active, but without a single interior element in their
support) are not kept as unknowns; each one is written as a combination of a
(p+1)^d block of inner functions chosen so that polynomials of coordinate
degree <= p are still reproduced.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cutgeom import MeshClassification, Tag, TensorSpace, support_counts
from .splines import BSplineBasis


class StabilizationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ExtensionMap:
    """``E`` maps inner coefficients to all active coefficients (rows follow ``active``)."""

    active: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    E: sp.csr_matrix
    blocks: dict

    def expand(self, c_inner: np.ndarray) -> np.ndarray:
        return self.E @ c_inner


def classify_stability(classification: MeshClassification):
    """Linear indices of inner and outer functions."""
    space = classification.space
    has_interior = support_counts(space, classification.element_tags == Tag.INTERIOR) > 0
    active = classification.function_tags != Tag.EXTERIOR
    inner = np.flatnonzero((active & has_interior).ravel())
    outer = np.flatnonzero((active & ~has_interior).ravel())
    return inner, outer


def marsden_coefficients(basis: BSplineBasis, j: int, block: np.ndarray) -> np.ndarray:
    """Coefficients e with c_j(g) = sum_l e_l c_l(g) for every polynomial g of degree <= p.

    Uses the dual polynomials psi_l(y) = prod_{r=1..p} (t_{l+r} - y) of
    Marsden's identity, which are exactly the B-spline coefficients of
    (x - y)^p. For uniform knots this equals index-space Lagrange extrapolation.
    """
    p = basis.p
    t = basis.knots
    a, b = basis.domain
    # sample points spread over the block support; any p+1 distinct values work
    ys = np.linspace(t[block[0]], t[block[-1] + p + 1], p + 1)
    scale = b - a

    def psi(l):
        return np.prod((t[l + 1 : l + p + 1][None, :] - ys[:, None]) / scale, axis=1)

    A = np.stack([psi(l) for l in block], axis=1)  # (p+1 samples, p+1 block functions)
    return np.linalg.solve(A, psi(j))


def lagrange_coefficients(j: int, block: np.ndarray) -> np.ndarray:
    """Index-space Lagrange values prod_{m != l} (j - m) / (l - m)."""
    out = np.empty(len(block))
    for k, l in enumerate(block):
        others = [m for m in block if m != l]
        out[k] = np.prod([(j - m) / (l - m) for m in others])
    return out


def _choose_block(space: TensorSpace, inner_mask: np.ndarray, j_multi) -> tuple:
    """Start indices of the nearest (p+1)^d block of inner functions."""
    cands = []
    for d, b in enumerate(space.bases):
        starts = np.arange(0, b.n - b.p)
        dist = np.abs(starts + b.p / 2 - j_multi[d])
        # ties toward the domain interior
        toward = np.abs(starts + b.p / 2 - (b.n - 1) / 2)
        order = np.lexsort((starts, toward, dist))
        cands.append(starts[order])
    best = None
    # search candidate combinations in order of increasing total distance
    radius = 0
    max_len = max(len(c) for c in cands)
    while radius < max_len and best is None:
        radius += 1
        pool = [c[:radius] for c in cands]
        for combo in itertools.product(*pool):
            sl = tuple(slice(s, s + space.bases[d].p + 1) for d, s in enumerate(combo))
            if not inner_mask[sl].all():
                continue
            key = (sum(abs(s + space.bases[d].p / 2 - j_multi[d]) for d, s in enumerate(combo)),
                   sum(abs(s + space.bases[d].p / 2 - (space.bases[d].n - 1) / 2) for d, s in enumerate(combo)),
                   combo)
            if best is None or key < best:
                best = key
    if best is None:
        raise StabilizationError(f"no admissible inner block for outer function {tuple(j_multi)}")
    return best[2]


def build_extension(space: TensorSpace, classification: MeshClassification,
                    inner: np.ndarray | None = None, outer: np.ndarray | None = None) -> ExtensionMap:
    if inner is None or outer is None:
        inner, outer = classify_stability(classification)
    active = classification.active
    row = np.full(space.n_functions, -1, dtype=np.int64)
    row[active] = np.arange(active.size)
    col = np.full(space.n_functions, -1, dtype=np.int64)
    col[inner] = np.arange(inner.size)
    inner_mask = np.zeros(space.shape, dtype=bool)
    inner_mask.ravel()[inner] = True

    rows, cols, vals = list(row[inner]), list(range(inner.size)), [1.0] * inner.size
    blocks = {}
    for j in outer:
        jm = space.function_multi(int(j))
        starts = _choose_block(space, inner_mask, jm)
        per_dir = []
        for d, (b, s) in enumerate(zip(space.bases, starts)):
            blk = np.arange(s, s + b.p + 1)
            per_dir.append((blk, marsden_coefficients(b, jm[d], blk)))
        blocks[int(j)] = starts
        for combo in itertools.product(*[range(len(blk)) for blk, _ in per_dir]):
            lm = tuple(per_dir[d][0][k] for d, k in enumerate(combo))
            e = float(np.prod([per_dir[d][1][k] for d, k in enumerate(combo)]))
            rows.append(row[j])
            cols.append(col[space.function_index(lm)])
            vals.append(e)
    E = sp.csr_matrix((vals, (rows, cols)), shape=(active.size, inner.size))
    E.sum_duplicates()
    return ExtensionMap(active, inner, outer, E, blocks)


def apply_stabilization(M, b: np.ndarray, ext: ExtensionMap):
    """Galerkin restriction ``(E^T M E, E^T b)`` to the extended basis."""
    A = M.matrix if hasattr(M, "matrix") else M
    if A.shape[0] != ext.E.shape[0] or b.shape[0] != ext.E.shape[0]:
        raise ValueError("dimension mismatch between system and extension map")
    Et = ext.E.T.tocsr()
    return (Et @ A @ ext.E).tocsr(), Et @ b
