"""Convergence of the stabilized projection under mesh refinement.

Runs a small sweep with the discontinuous weighted quadrature scheme and
prints errors and observed orders; expect orders near p+1.

    python demos/convergence_sweep.py
"""
from cutspline.bench import sweep


def main() -> None:
    rows = sweep([2, 3], [4, 8, 16], "dwq")
    print(f"{'p':>2}{'h':>4}{'active':>8}{'rel L2 error':>14}{'order':>8}{'CG iters':>10}{'total s':>9}")
    for r in rows:
        order = f"{r['order']:.2f}" if "order" in r else "-"
        print(f"{r['p']:2d}{r['h']:4d}{r['n_active']:8d}{r['error_rel_l2']:14.4e}{order:>8}"
              f"{r['cg_iters']:10d}{r['total']:9.2f}")


if __name__ == "__main__":
    main()
