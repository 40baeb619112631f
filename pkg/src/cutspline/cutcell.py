"""Exact clipping of axis-aligned cells by a half space and Gauss rules on the result.

The clipped cell is split into simplices (cone from one vertex over the
fan-triangulated faces not containing it); each simplex carries a collapsed
(Duffy) tensor Gauss rule.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cutgeom import HalfSpaceInterface


class ClassificationError(RuntimeError):
    """A cell tagged Cut is not actually cut by the interface."""


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex polygon (2D, ``faces`` holds one ccw loop) or polyhedron (3D, outward loops)."""

    vertices: np.ndarray
    faces: list

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]


@dataclass(frozen=True, eq=False)
class CutCellRule:
    element: tuple
    points: np.ndarray
    weights: np.ndarray
    volume: float
    tables: tuple | None = None  # optional per-direction basis values at ``points``

    def integrate(self, f) -> float:
        return float(self.weights @ f(*self.points.T))


# outward-oriented faces of the unit cube, corners numbered by bits (x, y, z)
_CUBE_FACES = [
    (0, 4, 6, 2), (1, 3, 7, 5),  # x = 0, x = 1
    (0, 1, 5, 4), (2, 6, 7, 3),  # y = 0, y = 1
    (0, 2, 3, 1), (4, 5, 7, 6),  # z = 0, z = 1
]


def _corners(cell: np.ndarray) -> np.ndarray:
    d = cell.shape[0]
    bits = np.array(list(itertools.product((0, 1), repeat=d)))
    # bit k of corner index refers to direction d-1-k; reorder so bit 0 is x
    bits = bits[:, ::-1]
    return cell[np.arange(d), bits]


def _clip_loop(pts: np.ndarray, lev: np.ndarray) -> list:
    """Sutherland-Hodgman against lev <= 0 for one closed loop."""
    out = []
    m = len(pts)
    for k in range(m):
        P, Q = pts[k], pts[(k + 1) % m]
        sp_, sq = lev[k], lev[(k + 1) % m]
        if sp_ <= 0:
            out.append(P)
        if (sp_ < 0 < sq) or (sq < 0 < sp_):
            t = sp_ / (sp_ - sq)
            out.append(P + t * (Q - P))
    return out


def clip_cell(cell, plane: HalfSpaceInterface, allow_trivial: bool = False) -> Polytope:
    """Intersection of the box ``cell`` (shape (d, 2)) with the inside of ``plane``."""
    cell = np.asarray(cell, dtype=float)
    d = cell.shape[0]
    corners = _corners(cell)
    lev = plane.side(corners)
    scale = np.linalg.norm(plane.normal) * np.linalg.norm(cell[:, 1] - cell[:, 0])
    lev = np.where(np.abs(lev) <= 1e-14 * scale, 0.0, lev)
    if not allow_trivial and (np.all(lev <= 0) or np.all(lev >= 0)):
        raise ClassificationError("cell is not cut by the interface")
    tol = 1e-12 * np.linalg.norm(cell[:, 1] - cell[:, 0])

    if d == 2:
        loop = corners[[0, 1, 3, 2]]  # ccw
        pts = _dedupe_loop(_clip_loop(loop, lev[[0, 1, 3, 2]]), tol)
        return Polytope(np.array(pts).reshape(-1, 2), [list(range(len(pts)))])
    if d != 3:
        raise ValueError("clip_cell supports 2D and 3D cells")

    verts: list = []

    def vid(x):
        for k, v in enumerate(verts):
            if np.linalg.norm(v - x) <= tol:
                return k
        verts.append(np.asarray(x))
        return len(verts) - 1

    faces = []
    for face in _CUBE_FACES:
        loop = _clip_loop(corners[list(face)], lev[list(face)])
        ids = _dedupe_ids([vid(x) for x in loop])
        if len(ids) >= 3:
            faces.append(ids)
    V = np.array(verts).reshape(-1, 3)
    on_plane = [k for k in range(len(V)) if abs(plane.side(V[k])) <= 1e-12 * scale]
    if len(on_plane) >= 3:
        faces.append(_order_on_plane(V, on_plane, plane.normal))
    return Polytope(V, faces)


def _dedupe_loop(pts, tol):
    out = []
    for x in pts:
        if not out or np.linalg.norm(out[-1] - x) > tol:
            out.append(x)
    if len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= tol:
        out.pop()
    return out


def _dedupe_ids(ids):
    out = []
    for k in ids:
        if not out or out[-1] != k:
            out.append(k)
    if len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _order_on_plane(V, ids, normal):
    P = V[ids]
    c = P.mean(axis=0)
    n = normal / np.linalg.norm(normal)
    e1 = P[0] - c
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    ang = np.arctan2((P - c) @ e2, (P - c) @ e1)
    return [ids[k] for k in np.argsort(ang)]


def polytope_volume(poly: Polytope) -> float:
    return float(sum(abs(np.linalg.det(s[1:] - s[0])) for s in simplices(poly)) / _factorial(poly.dim))


def _factorial(d):
    return 2 if d == 2 else 6


def simplices(poly: Polytope, min_volume: float = 0.0) -> list:
    """Triangles/tetrahedra covering the polytope.

    The cone apex is the vertex on the most faces; faces through it would
    only add degenerate simplices and are skipped.
    """
    V = poly.vertices
    if len(V) < poly.dim + 1:
        return []
    incidence = np.zeros(len(V), dtype=int)
    for face in poly.faces:
        incidence[list(set(face))] += 1
    a = int(np.argmax(incidence))
    apex = V[a]
    out = []
    for face in poly.faces:
        if poly.dim == 2:
            for k in range(len(face)):
                if a not in (face[k], face[(k + 1) % len(face)]):
                    out.append(np.array([apex, V[face[k]], V[face[(k + 1) % len(face)]]]))
        elif a not in face:
            for k in range(1, len(face) - 1):
                out.append(np.array([apex, V[face[0]], V[face[k]], V[face[k + 1]]]))
    if min_volume > 0:
        out = [s for s in out if abs(np.linalg.det(s[1:] - s[0])) / _factorial(poly.dim) >= min_volume]
    return out


@lru_cache(maxsize=64)
def _collapsed_rule(dim: int, order: int):
    """Duffy rule on the reference simplex: barycentric-free coordinates and weights."""
    x, w = np.polynomial.legendre.leggauss(order)
    u, wu = 0.5 * (x + 1.0), 0.5 * w
    if dim == 2:
        U, Vv = np.meshgrid(u, u, indexing="ij")
        W = np.outer(wu, wu)
        a, b = U, (1 - U) * Vv
        jac = 1 - U
        coords = np.stack([a.ravel(), b.ravel()], axis=1)
    else:
        U, Vv, Ww = np.meshgrid(u, u, u, indexing="ij")
        W = np.einsum("i,j,k->ijk", wu, wu, wu)
        a = U
        b = (1 - U) * Vv
        c = (1 - U) * (1 - Vv) * Ww
        jac = (1 - U) ** 2 * (1 - Vv)
        coords = np.stack([a.ravel(), b.ravel(), c.ravel()], axis=1)
    return coords, (W * jac).ravel()


def simplex_rule(simplex: np.ndarray, order: int):
    """Collapsed Gauss rule with ``order`` points per direction on one simplex."""
    dim = simplex.shape[1]
    coords, w = _collapsed_rule(dim, order)
    E = simplex[1:] - simplex[0]
    pts = simplex[0] + coords @ E
    return pts, w * abs(np.linalg.det(E))


def build_cut_cell_rule(cell, plane: HalfSpaceInterface, order: int, element=None) -> CutCellRule:
    cell = np.asarray(cell, dtype=float)
    poly = clip_cell(cell, plane)
    cell_vol = float(np.prod(cell[:, 1] - cell[:, 0]))
    simp = simplices(poly, 1e-14 * cell_vol)
    if not simp:
        d = cell.shape[0]
        return CutCellRule(element, np.zeros((0, d)), np.zeros(0), 0.0)
    parts = [simplex_rule(s, order) for s in simp]
    pts = np.concatenate([p for p, _ in parts])
    wts = np.concatenate([w for _, w in parts])
    return CutCellRule(element, pts, wts, float(wts.sum()))


def halfspace_box_volume(lower, upper, plane: HalfSpaceInterface) -> float:
    """Exact measure of ``{x in box : n.(x - q) <= 0}``.

    The direction with the smallest normal component is integrated last: the
    cross-section measure is a piecewise polynomial of degree d-1 in that
    coordinate, so a d-point Gauss rule between its breakpoints is exact.
    This avoids the cancellation of corner inclusion-exclusion when a normal
    component is tiny.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    # breakpoints of nearly parallel directions overflow to +-inf and are clipped to the box
    with np.errstate(over="ignore", divide="ignore"):
        return _section(lower, upper, plane.normal.astype(float), plane.offset)


def _section(lo, hi, n, c) -> float:
    if lo.size == 1:
        if n[0] == 0.0:
            return float(hi[0] - lo[0]) if c >= 0 else 0.0
        x = c / n[0]
        if n[0] > 0:
            return float(np.clip(x, lo[0], hi[0]) - lo[0])
        return float(hi[0] - np.clip(x, lo[0], hi[0]))
    k = int(np.argmin(np.abs(n)))
    rest = [m for m in range(lo.size) if m != k]
    lo_r, hi_r, n_r = lo[rest], hi[rest], n[rest]
    if n[k] == 0.0:
        return float(hi[k] - lo[k]) * _section(lo_r, hi_r, n_r, c)
    # corner values of the remaining directions give the breakpoints in x_k
    corners = np.array(list(itertools.product(*zip(lo_r, hi_r))))
    cuts = (c - corners @ n_r) / n[k]
    pts = np.unique(np.clip(np.concatenate([[lo[k], hi[k]], cuts]), lo[k], hi[k]))
    xg, wg = np.polynomial.legendre.leggauss(lo.size)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        for x, w in zip(0.5 * (b - a) * xg + 0.5 * (a + b), 0.5 * (b - a) * wg):
            total += w * _section(lo_r, hi_r, n_r, c - n[k] * x)
    return float(total)
