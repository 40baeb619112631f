"""L2 projection on a cube cut by a plane, with all three formation schemes.

Classifies the mesh, assembles the mass matrix with the Gauss reference, the
hybrid scheme and discontinuous weighted quadrature, stabilizes with extended
B-splines and prints errors and timing components side by side.

    python demos/cut_mesh_projection.py
"""
from cutspline.bench import compare


def main(p: int = 3, h: int = 8) -> None:
    rep = compare(p, h)
    first = next(iter(rep["schemes"].values()))
    print(f"p={p}, h={h}: {first['n_active']} active functions, {first['n_inner']} inner, "
          f"{first['n_cut_elements']} cut elements")
    cols = ("prep_wq", "prep_input", "interior_rows", "cut_regular", "cut_elements", "total")
    print(f"{'scheme':8}{'rel L2 error':>14}{'matrix dev':>12}" + "".join(f"{c:>14}" for c in cols))
    for name, s in rep["schemes"].items():
        t = s["timings"]
        print(f"{name:8}{s['error_rel_l2']:14.4e}{s['matrix_max_rel_deviation']:12.1e}"
              + "".join(f"{t[c]:14.3f}" for c in cols))


if __name__ == "__main__":
    main()
