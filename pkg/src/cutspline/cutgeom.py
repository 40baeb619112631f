"""Planar trimming interface, element/function classification and support splits.

The background mesh is a tensor product of univariate bases with the identity
geometry map, so parameter space and physical space coincide. The domain of
interest is the half space ``{x : n.(x - q) <= 0}``.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .splines import BSplineBasis


class Tag(enum.IntEnum):
    EXTERIOR = 0
    INTERIOR = 1
    CUT = 2


class Side(enum.IntEnum):
    """Side of a split knot that holds the regular (tensor-structured) part."""

    BELOW = 0
    ABOVE = 1


@dataclass(frozen=True, eq=False)
class TensorSpace:
    """Tensor-product B-spline space; functions and elements are numbered lexicographically
    (last direction fastest)."""

    bases: tuple[BSplineBasis, ...]

    def __post_init__(self):
        object.__setattr__(self, "bases", tuple(self.bases))
        if len(self.bases) not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")

    @classmethod
    def uniform(cls, dim: int, p: int, h: int, a: float = -1.0, b: float = 1.0) -> "TensorSpace":
        basis = BSplineBasis.uniform(p, h, a, b)
        return cls((basis,) * dim)

    @property
    def dim(self) -> int:
        return len(self.bases)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(b.p for b in self.bases)

    @property
    def shape(self) -> tuple[int, ...]:
        """Number of functions per direction."""
        return tuple(b.n for b in self.bases)

    @property
    def element_shape(self) -> tuple[int, ...]:
        return tuple(b.n_spans for b in self.bases)

    @property
    def n_functions(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.element_shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([b.domain[0] for b in self.bases])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b.domain[1] for b in self.bases])

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def function_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def function_multi(self, index: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(index, self.shape))

    def element_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.element_shape))

    def element_multi(self, index: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(index, self.element_shape))

    def element_box(self, multi) -> np.ndarray:
        """(dim, 2) array of element bounds."""
        return np.array([b.spans[e] for b, e in zip(self.bases, multi)])

    def element_tables(self, multi, points) -> list:
        """Per direction, values of the p+1 functions of element ``multi`` at ``points`` (shape (m, p+1))."""
        points = np.asarray(points, dtype=float)
        return [b.values_on_span(multi[d], points[:, d]) for d, b in enumerate(self.bases)]

    def support_box(self, multi) -> tuple[tuple[int, int], ...]:
        """Inclusive span-index range per direction of supp(B_i)."""
        return tuple((int(b.support[i, 0]), int(b.support[i, 1])) for b, i in zip(self.bases, multi))


@dataclass(frozen=True)
class HalfSpaceInterface:
    """Plane through ``point`` with normal ``normal``; inside is ``normal.(x - point) <= 0``."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.point, dtype=float)
        n = np.asarray(self.normal, dtype=float)
        if q.shape != n.shape or q.ndim != 1:
            raise ValueError("point and normal must be vectors of equal length")
        if not np.linalg.norm(n) > 0:
            raise ValueError("normal must be nonzero")
        object.__setattr__(self, "point", q)
        object.__setattr__(self, "normal", n)

    @property
    def offset(self) -> float:
        return float(self.normal @ self.point)

    def side(self, x) -> np.ndarray:
        """Signed level ``n.(x - q)``; x has shape (..., dim)."""
        return np.asarray(x, dtype=float) @ self.normal - self.offset

    def flipped(self) -> "HalfSpaceInterface":
        return HalfSpaceInterface(self.point, -self.normal)

    def shifted(self, distance: float) -> "HalfSpaceInterface":
        """Move the plane by ``distance`` along the unit normal."""
        unit = self.normal / np.linalg.norm(self.normal)
        return HalfSpaceInterface(self.point + distance * unit, self.normal)


# default plane of the three-dimensional benchmark
BENCHMARK_PLANE = HalfSpaceInterface(np.array([0.1, 0.2, 0.3]), np.array([0.5, -0.2, 0.9]))


@dataclass(frozen=True, eq=False)
class SupportSplit:
    """Regular/cut decomposition of the support of one cut function.

    ``regular_box`` is an inclusive element-index range per direction (None
    when no split exists); element lists hold element multi-indices.
    """

    function: tuple[int, ...]
    split_dir: int | None
    delta: float | None
    side: Side | None
    regular_box: tuple[tuple[int, int], ...] | None
    leftover_interior: list = field(default_factory=list)
    leftover_cut: list = field(default_factory=list)
    exterior: list = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return self.split_dir is None

    def regular_elements(self) -> list:
        if self.regular_box is None:
            return []
        return list(itertools.product(*[range(lo, hi + 1) for lo, hi in self.regular_box]))


@dataclass(frozen=True, eq=False)
class MeshClassification:
    """Element and function tags; arrays are shaped like the element/function grids."""

    space: TensorSpace
    plane: HalfSpaceInterface
    element_tags: np.ndarray
    function_tags: np.ndarray | None = None

    @property
    def cut_elements(self) -> list[tuple[int, ...]]:
        return [tuple(int(k) for k in m) for m in np.argwhere(self.element_tags == Tag.CUT)]

    @property
    def interior_elements(self) -> list[tuple[int, ...]]:
        return [tuple(int(k) for k in m) for m in np.argwhere(self.element_tags == Tag.INTERIOR)]

    def functions_with(self, tag: Tag) -> list[tuple[int, ...]]:
        return [tuple(int(k) for k in m) for m in np.argwhere(self.function_tags == tag)]

    @property
    def active(self) -> np.ndarray:
        """Linear indices of non-exterior functions in lexicographic order."""
        return np.flatnonzero(self.function_tags.ravel() != Tag.EXTERIOR)

    def support_tags(self, multi) -> np.ndarray:
        box = self.space.support_box(multi)
        return self.element_tags[tuple(slice(lo, hi + 1) for lo, hi in box)]


def element_corner_levels(space: TensorSpace, plane: HalfSpaceInterface) -> tuple[np.ndarray, np.ndarray]:
    """Min and max of the plane level over the corners of every element."""
    if plane.normal.size != space.dim:
        raise ValueError("plane dimension does not match the space")
    s_min = np.zeros(space.element_shape)
    s_max = np.zeros(space.element_shape)
    # a linear function over a box attains its extrema at corners; per direction
    # the extreme contribution is taken independently
    for d, b in enumerate(space.bases):
        lo = plane.normal[d] * b.spans[:, 0]
        hi = plane.normal[d] * b.spans[:, 1]
        shape = [1] * space.dim
        shape[d] = -1
        s_min = s_min + np.minimum(lo, hi).reshape(shape)
        s_max = s_max + np.maximum(lo, hi).reshape(shape)
    return s_min - plane.offset, s_max - plane.offset


def classify_elements(space: TensorSpace, plane: HalfSpaceInterface) -> MeshClassification:
    s_min, s_max = element_corner_levels(space, plane)
    eps = 1e-12 * space.diameter * np.linalg.norm(plane.normal)
    tags = np.full(space.element_shape, Tag.CUT, dtype=np.int8)
    tags[s_min >= -eps] = Tag.EXTERIOR
    tags[s_max <= eps] = Tag.INTERIOR
    return MeshClassification(space, plane, tags)


def support_counts(space: TensorSpace, mask: np.ndarray) -> np.ndarray:
    """Number of ``mask`` elements in the support of every function (function-grid shape)."""
    out = np.asarray(mask, dtype=np.int64)
    for d, b in enumerate(space.bases):
        ind = np.zeros((b.n, b.n_spans), dtype=np.int64)
        for i, (lo, hi) in enumerate(b.support):
            ind[i, lo : hi + 1] = 1
        out = np.moveaxis(np.tensordot(ind, out, axes=(1, d)), 0, d)
    return out


def classify_functions(space: TensorSpace, element_tags: np.ndarray) -> np.ndarray:
    total = support_counts(space, np.ones(space.element_shape, dtype=bool))
    n_int = support_counts(space, element_tags == Tag.INTERIOR)
    n_ext = support_counts(space, element_tags == Tag.EXTERIOR)
    tags = np.full(space.shape, Tag.CUT, dtype=np.int8)
    tags[n_int == total] = Tag.INTERIOR
    tags[n_ext == total] = Tag.EXTERIOR
    return tags


def classify(space: TensorSpace, plane: HalfSpaceInterface) -> MeshClassification:
    """Element tags followed by function tags."""
    mc = classify_elements(space, plane)
    return MeshClassification(space, plane, mc.element_tags, classify_functions(space, mc.element_tags))


def find_split(space: TensorSpace, classification: MeshClassification, multi) -> SupportSplit:
    """Largest interior slab of the support of cut function ``multi``.

    Every interior knot of the support in every direction is tried with both
    sides; a slab is admissible when all its elements are interior. Ties go
    to the larger slab volume, then the lower direction, then the side deeper
    inside the domain.
    """
    multi = tuple(int(k) for k in multi)
    box = space.support_box(multi)
    sub = classification.support_tags(multi)
    interior = sub == Tag.INTERIOR
    normal = classification.plane.normal

    best = None
    for d in range(space.dim):
        lo, hi = box[d]
        widths = [np.diff(b.spans[lo_ : hi_ + 1], axis=1).ravel() for b, (lo_, hi_) in zip(space.bases, box)]
        other_vol = np.prod([w.sum() for k, w in enumerate(widths) if k != d]) if space.dim > 1 else 1.0
        # per layer along d: is the whole layer interior?
        layer_ok = np.all(np.moveaxis(interior, d, 0).reshape(hi - lo + 1, -1), axis=1)
        n_other = interior.size // (hi - lo + 1)
        # deeper side: n_d > 0 means lower coordinates are further inside
        deeper = Side.BELOW if normal[d] >= 0 else Side.ABOVE
        for side in (Side.BELOW, Side.ABOVE):
            if side == Side.BELOW:
                k = 0
                while k < hi - lo and layer_ok[k]:
                    k += 1
                layers = range(0, k)
                delta_span = lo + k
            else:
                k = 0
                while k < hi - lo and layer_ok[hi - lo - k]:
                    k += 1
                layers = range(hi - lo + 1 - k, hi - lo + 1)
                delta_span = hi - k + 1
            if k == 0:
                continue
            count = k * n_other
            volume = widths[d][list(layers)].sum() * other_vol
            key = (count, volume, -d, side == deeper)
            if best is None or key > best[0]:
                delta = float(space.bases[d].breaks[delta_span])
                if side == Side.BELOW:
                    rng = (lo, delta_span - 1)
                else:
                    rng = (delta_span, hi)
                best = (key, d, delta, side, rng)

    if best is None:
        split_dir, delta, side, regular = None, None, None, None
    else:
        _, split_dir, delta, side, rng = best
        regular = tuple(rng if k == split_dir else box[k] for k in range(space.dim))

    leftover_interior, leftover_cut, exterior = [], [], []
    for local in np.ndindex(*sub.shape):
        e = tuple(box[k][0] + local[k] for k in range(space.dim))
        if regular is not None and all(regular[k][0] <= e[k] <= regular[k][1] for k in range(space.dim)):
            continue
        tag = sub[local]
        if tag == Tag.INTERIOR:
            leftover_interior.append(e)
        elif tag == Tag.CUT:
            leftover_cut.append(e)
        else:
            exterior.append(e)
    return SupportSplit(multi, split_dir, delta, side, regular, leftover_interior, leftover_cut, exterior)


def find_all_splits(space: TensorSpace, classification: MeshClassification) -> dict:
    """SupportSplit for every cut function, keyed by multi-index."""
    return {m: find_split(space, classification, m) for m in classification.functions_with(Tag.CUT)}
