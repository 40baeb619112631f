"""Fast mass matrix formation for B-spline spaces trimmed by a plane.

Modules: ``splines`` (univariate bases, knot insertion), ``cutgeom``
(classification and support splits), ``quadrature`` (Gauss, weighted and
discontinuous weighted quadrature), ``cutcell`` (clipped-cell rules),
``assembly`` (Ref, Hybrid and DWQ formation), ``stabilization`` (extended
B-splines), ``projection`` (CG solve, L2 errors) and ``bench``/``cli``.
"""
from .assembly import SCHEMES, MassFormation, SparseRowMatrix, TimingBreakdown, assemble, build_rhs
from .bench import BenchReport, RunConfig, compare, run_case, sweep
from .cutgeom import (BENCHMARK_PLANE, HalfSpaceInterface, MeshClassification, Side, SupportSplit, Tag,
                      TensorSpace, classify, find_all_splits, find_split)
from .projection import SolveReport, condition_estimate, eval_field, l2_error, solve_cg
from .quadrature import DWQRule, WQRule, build_dwq_rule, build_superset, build_wq_rules, gauss_legendre
from .splines import BSplineBasis, KnotVector, insert_knot, make_open_uniform_knots
from .stabilization import ExtensionMap, apply_stabilization, build_extension, classify_stability

__version__ = "0.1.0"

__all__ = [
    "SCHEMES", "MassFormation", "SparseRowMatrix", "TimingBreakdown", "assemble", "build_rhs",
    "BenchReport", "RunConfig", "compare", "run_case", "sweep",
    "BENCHMARK_PLANE", "HalfSpaceInterface", "MeshClassification", "Side", "SupportSplit", "Tag", "TensorSpace",
    "classify", "find_all_splits", "find_split",
    "SolveReport", "condition_estimate", "eval_field", "l2_error", "solve_cg",
    "DWQRule", "WQRule", "build_dwq_rule", "build_superset", "build_wq_rules", "gauss_legendre",
    "BSplineBasis", "KnotVector", "insert_knot", "make_open_uniform_knots",
    "ExtensionMap", "apply_stabilization", "build_extension", "classify_stability",
]
