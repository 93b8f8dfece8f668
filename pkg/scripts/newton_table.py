"""Newton histories of the X-dual gradient norm for four setups.

(A) square, ndof 8193, start from the Poisson solution; (B) same mesh,
start from the weighted Poisson solution with weight 2.5; (C) adaptive
L-shape mesh of level 12, weighted Poisson start; (D) same mesh, start
from the prolongated level-11 solution.  Writes ``<out>/newton.csv``.
"""

import argparse
import csv
from pathlib import Path

from nldpg.estimator import doerfler_mark, local_estimator
from nldpg.mesh import make_lshape_mesh, refine_nvb, refine_uniform_nvb
from nldpg.nonlinearity import get_model
from nldpg.problems import manufactured_square_problem, square_mesh_level0
from nldpg.solver import linear_init, newton
from nldpg.spaces import DiscreteState, compute_weights, dof_layout, prolongate

ONE_F = lambda x: 1.0 + 0.0 * x[..., 0]


def square_runs(model):
    m = square_mesh_level0()
    for _ in range(4):
        m = refine_uniform_nvb(m)
    w = compute_weights(m, manufactured_square_problem(model)[3])
    return {
        "A": newton(m, model, w, linear_init(m, 1.0, w)).norms,
        "B": newton(m, model, w, linear_init(m, 2.5, w)).norms,
    }, dof_layout(m).ndof


def lshape_runs(model, level=12, theta=0.3):
    mesh = make_lshape_mesh()
    prev = None
    for lev in range(level + 1):
        w = compute_weights(mesh, ONE_F)
        if prev is None:
            init = linear_init(mesh, 2.5, w)
        else:
            init = DiscreteState(*prolongate(prev[0], mesh, prev[1].uC, prev[1].pRT))
        if lev == level:
            return {
                "C": newton(mesh, model, w, linear_init(mesh, 2.5, w)).norms,
                "D": newton(mesh, model, w, init).norms,
            }, dof_layout(mesh).ndof
        state = newton(mesh, model, w, init).state
        prev = (mesh, state)
        mesh = refine_nvb(mesh, doerfler_mark(local_estimator(mesh, model, w, state), theta))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="example-a-data")
    p.add_argument("--out", default="results")
    args = p.parse_args()
    model = get_model(args.model)

    sq, nsq = square_runs(model)
    ls, nls = lshape_runs(model)
    runs = {**sq, **ls}
    print(f"square ndof {nsq}, L-shape level-12 ndof {nls}")
    depth = max(len(v) for v in runs.values())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "newton.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["iter", *runs])
        print(f"{'iter':>4}" + "".join(f"{k:>12}" for k in runs))
        for j in range(depth):
            row = [f"{v[j]:.10e}" if j < len(v) else "" for v in runs.values()]
            wr.writerow([j, *row])
            print(f"{j:>4}" + "".join(f"{v[j]:12.3e}" if j < len(v) else " " * 12 for v in runs.values()))


if __name__ == "__main__":
    main()
