"""Weighted and discontinuous weighted quadrature on one univariate basis.

Builds the shared Gauss superset, the per-function WQ rules and a one-sided
DWQ rule, then checks them against exact Gram entries.

    python demos/quadrature_rules.py
"""
import numpy as np

from cutspline.cutgeom import Side
from cutspline.quadrature import build_dwq_rule, build_superset, build_wq_rules
from cutspline.splines import BSplineBasis, mass_matrix_1d


def main(p: int = 3, h: int = 10) -> None:
    basis = BSplineBasis.uniform(p, h, -1.0, 1.0)
    superset = build_superset(basis)
    colloc = superset.collocation()
    gram = mass_matrix_1d(basis)
    rules = build_wq_rules(basis, superset)
    print(f"p={p}, h={h}: {basis.n} functions, superset of {superset.size} Gauss points")
    print(" i  points  gauss-shortcut  max rel residual")
    for r in rules:
        js = basis.overlapping(r.index)
        res = np.abs(colloc[np.ix_(js, r.ids)] @ r.weights - gram[r.index, js]).max() / gram[r.index, js].max()
        print(f"{r.index:2d}  {r.ids.size:6d}  {str(r.gauss_shortcut):>14}  {res:.1e}")

    i = basis.n // 2
    lo, hi = basis.support[i]
    delta = float(basis.breaks[lo + 2])
    d = build_dwq_rule(basis, superset, i, delta, Side.ABOVE, colloc, rules[i])
    js = basis.overlapping(i)
    exact = mass_matrix_1d(basis, lo=delta)[i, js]
    res = np.abs(colloc[np.ix_(js, d.ids)] @ d.weights - exact).max() / exact.max()
    print(f"\nDWQ rule of B_{i} above delta={delta:+.2f}: {d.ids.size} points "
          f"({d.nested_ids.size} nested), all above delta: {bool(np.all(superset.points[d.ids] > delta))}, "
          f"max rel residual {res:.1e}")


if __name__ == "__main__":
    main()
