"""Second-variation reports along the vertical line eps = eps0/2: escaping
(stable), non-escaping above the boundary (unstable), and the kernel at the
boundary itself."""

import argparse
import math
import pathlib

from vortexlab import (Potential, find_epsilon0, gl_linearization_eigenvalue,
                       make_grid, solve_extended_profile, spectrum_summary)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=3)
    ap.add_argument("--W", default="quadratic")
    ap.add_argument("--Wt", default="linear")
    ap.add_argument("--grid-n", type=int, default=1200)
    ap.add_argument("--grid-beta", type=float, default=3.0)
    ap.add_argument("--outdir", default="out/stability")
    args = ap.parse_args()

    W = Potential.from_spec(args.W)
    Wt = Potential.from_spec(args.Wt)
    grid = make_grid(args.N, args.grid_n, {"graded": args.grid_beta})
    eps0 = find_epsilon0(args.N, W, (0.05, 1.0))
    eps = eps0 / 2
    ell = gl_linearization_eigenvalue(args.N, W, eps, grid)[0]
    eta_star = math.sqrt(Wt.eval(0.0, 1) / abs(ell))
    print(f"eps0 = {eps0:.6f}; working at eps = {eps:.6f}, "
          f"eta_star = {eta_star:.6f}")

    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [("escaping", 2.0 * eta_star, "escaping"),
            ("unstable", 2.0 * eta_star, "non_escaping"),
            ("critical", eta_star, "non_escaping")]
    for name, eta, branch in runs:
        prof = solve_extended_profile(args.N, W, Wt, eps, eta, grid,
                                      branch_hint=branch)
        rep = spectrum_summary(prof, W, Wt, eps, eta)
        (out / f"{name}.json").write_text(rep.to_json() + "\n")
        print(f"{name:9s} eta={eta:.4f} branch={prof.branch:13s} "
              f"verdict={rep.verdict}")
        if rep.kernel:
            (out / f"{name}_kernel.csv").write_text(rep.kernel_csv())
            print(f"          kernel written to {name}_kernel.csv")
    print(f"wrote reports under {out}/")


if __name__ == "__main__":
    main()
