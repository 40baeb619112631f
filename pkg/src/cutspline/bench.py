"""End-to-end runs: classify, prepare rules, assemble, stabilize, solve, measure.

Used by the command line harness and by the demos.
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import SCHEMES, MassFormation, TimingBreakdown
from .cutgeom import BENCHMARK_PLANE, HalfSpaceInterface, TensorSpace, classify, find_all_splits
from .projection import l2_error, solve_cg
from .stabilization import apply_stabilization, build_extension

CSV_HEADER = ["p", "h", "scheme", "n_active", "error_rel_l2", "order", "prep_wq", "prep_input",
              "interior", "cut_regular", "cut_elements", "total", "cg_iters"]


def _benchmark_target(dim):
    if dim == 3:
        return lambda x, y, z: np.sin(2 * x * z) * np.cos(3 * y * z)
    if dim == 2:
        return lambda x, y: np.sin(2 * x) * np.cos(3 * y)
    return lambda x: np.sin(2 * x)


def _poly_target(dim, deg):
    def f(*x):
        out = np.ones(np.shape(x[0]))
        for k, xk in enumerate(x):
            out = out * (xk + 0.1 * (k + 1)) ** deg
        return out
    return f


def make_target(name: str, dim: int):
    """Target function by registry name: ``paper``, ``constant`` or ``poly:<deg>``."""
    if name == "paper":
        return _benchmark_target(dim)
    if name == "constant":
        return lambda *x: np.ones(np.shape(x[0]))
    m = re.fullmatch(r"poly:(\d+)", name)
    if m:
        return _poly_target(dim, int(m.group(1)))
    raise ValueError(f"unknown target {name!r}; expected paper, constant or poly:<deg>")


def sliver_plane(space: TensorSpace, plane: HalfSpaceInterface, thickness: float = 1e-6) -> HalfSpaceInterface:
    """Parallel plane that keeps the nearest outside grid vertex inside by ``thickness``.

    Elements around that vertex then meet the domain only in a corner of
    width ``thickness``.
    """
    # interior grid vertices, so the sliver is not on the box boundary
    grids = np.meshgrid(*[b.breaks[1:-1] for b in space.bases], indexing="ij")
    verts = np.stack([g.ravel() for g in grids], axis=1)
    unit = plane.normal / np.linalg.norm(plane.normal)
    dist = (verts - plane.point) @ unit
    outside = dist > 0
    if not outside.any():
        raise ValueError("no grid vertex lies outside the domain")
    v = verts[outside][np.argmin(dist[outside])]
    return HalfSpaceInterface(v + thickness * unit, plane.normal)


@dataclass
class RunConfig:
    p: int = 2
    h: int = 8
    dim: int = 3
    scheme: str = "dwq"
    lower: float = -1.0
    upper: float = 1.0
    plane_point: tuple | None = None
    plane_normal: tuple | None = None
    target: str = "paper"
    cut_quad_order: int | None = None
    export_matrix: str | None = None
    repeat: int = 1
    stabilize: bool = True
    rhs_rules: str = "gauss"

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.p < 1 or self.h < 1:
            raise ValueError("p and h must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.lower < self.upper:
            raise ValueError("domain bounds must satisfy lower < upper")
        if self.repeat < 1:
            raise ValueError("repeat must be >= 1")
        if self.cut_quad_order is not None and not 1 <= self.cut_quad_order <= 64:
            raise ValueError("cut quadrature order must be in [1, 64]")
        default = BENCHMARK_PLANE if self.dim == 3 else HalfSpaceInterface(np.array([0.1, 0.2]), np.array([0.5, 0.9]))
        q = default.point if self.plane_point is None else np.asarray(self.plane_point, dtype=float)
        n = default.normal if self.plane_normal is None else np.asarray(self.plane_normal, dtype=float)
        if q.size != self.dim or n.size != self.dim:
            raise ValueError("plane point and normal must have dim components")
        self.plane_point = tuple(float(v) for v in q)
        self.plane_normal = tuple(float(v) for v in n)
        make_target(self.target, self.dim)

    @property
    def plane(self) -> HalfSpaceInterface:
        return HalfSpaceInterface(np.array(self.plane_point), np.array(self.plane_normal))

    def space(self) -> TensorSpace:
        return TensorSpace.uniform(self.dim, self.p, self.h, self.lower, self.upper)


@dataclass
class BenchReport:
    config: dict
    n_active: int
    n_inner: int
    n_cut_functions: int
    n_cut_elements: int
    error_rel_l2: float
    cg_iterations: int
    cg_converged: bool
    timings: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CaseResult:
    """Everything produced by one run, for programmatic use."""

    report: BenchReport
    matrix: object
    rhs: np.ndarray
    coefficients: np.ndarray


def run_case(cfg: RunConfig, keep_matrix: bool = False) -> CaseResult:
    space = cfg.space()
    f = make_target(cfg.target, cfg.dim)
    mc = classify(space, cfg.plane)
    splits = find_all_splits(space, mc) if cfg.scheme != "ref" else None
    runs = []
    for _ in range(cfg.repeat):
        form = MassFormation(space, mc, cfg.scheme, splits, cfg.cut_quad_order)
        M, timing = form.matrix()
        runs.append(timing)
    timing = TimingBreakdown.fastest(runs)
    b = form.rhs(f, cfg.rhs_rules)
    if cfg.export_matrix:
        M.export_matrix_market(cfg.export_matrix)

    full = np.zeros(space.n_functions)
    if cfg.stabilize:
        ext = build_extension(space, mc)
        Me, be = apply_stabilization(M, b, ext)
        sol = solve_cg(Me, be)
        full[mc.active] = ext.expand(sol.coefficients)
        n_inner = int(ext.inner.size)
    else:
        sol = solve_cg(M.matrix, b)
        full[mc.active] = sol.coefficients
        n_inner = int(mc.active.size)
    err = l2_error(space, mc, full, f, form.cut_rules())
    report = BenchReport(
        config=asdict(cfg),
        n_active=int(mc.active.size),
        n_inner=n_inner,
        n_cut_functions=len(form.cut_functions),
        n_cut_elements=len(mc.cut_elements),
        error_rel_l2=err,
        cg_iterations=sol.iterations,
        cg_converged=sol.converged,
        timings=timing.as_dict(),
    )
    return CaseResult(report, M if keep_matrix else None, b, full)


def sweep(p_list, h_list, scheme: str = "dwq", **kwargs) -> list[dict]:
    """One row per (p, h); ``order`` is log2(e_prev / e) against the previous h of the same p."""
    p_list, h_list = list(p_list), list(h_list)
    if not p_list or not h_list:
        raise ValueError("p and h lists must be nonempty")
    rows = []
    for p in p_list:
        prev = None
        for h in sorted(h_list):
            row = {"p": p, "h": h, "scheme": scheme}
            try:
                rep = run_case(RunConfig(p=p, h=h, scheme=scheme, **kwargs)).report
                t = rep.timings
                row.update(n_active=rep.n_active, error_rel_l2=rep.error_rel_l2,
                           prep_wq=t["prep_wq"], prep_input=t["prep_input"], interior=t["interior_rows"],
                           cut_regular=t["cut_regular"], cut_elements=t["cut_elements"], total=t["total"],
                           cg_iters=rep.cg_iterations)
                if prev is not None and prev[1] > 0 and rep.error_rel_l2 > 0:
                    row["order"] = math.log(prev[1] / rep.error_rel_l2) / math.log(h / prev[0])
                prev = (h, rep.error_rel_l2)
            except Exception as exc:  # recorded in-row, the sweep continues
                row["error"] = f"{type(exc).__name__}: {exc}"
                prev = None
            rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_HEADER, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in CSV_HEADER})
    return buf.getvalue()


def compare(p: int, h: int, **kwargs) -> dict:
    """Run all three schemes on identical inputs and report deviations and timing ratios."""
    results = {s: run_case(RunConfig(p=p, h=h, scheme=s, **kwargs), keep_matrix=True) for s in SCHEMES}
    ref = results["ref"].matrix.matrix
    scale = abs(ref).max()
    out = {"p": p, "h": h, "schemes": {}}
    e_ref = results["ref"].report.error_rel_l2
    for s, r in results.items():
        dev = abs(r.matrix.matrix - ref).max() / scale
        rep = r.report.to_dict()
        rep["matrix_max_rel_deviation"] = float(dev)
        rep["error_rel_deviation"] = abs(r.report.error_rel_l2 - e_ref) / e_ref if e_ref else 0.0
        rep["total_time_ratio_to_ref"] = r.report.timings["total"] / max(results["ref"].report.timings["total"], 1e-300)
        out["schemes"][s] = rep
    return out


__all__ = ["RunConfig", "BenchReport", "CaseResult", "run_case", "sweep", "compare", "rows_to_csv",
           "make_target", "sliver_plane", "CSV_HEADER"]
