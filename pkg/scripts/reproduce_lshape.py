"""Uniform and adaptive refinement on the L-shaped domain with f = 1.

Writes ``<out>/lshape_uniform.csv`` and ``<out>/lshape_adaptive.csv`` and
prints the log-log slopes of eta over the last four levels.

    python3 scripts/reproduce_lshape.py --max-ndof 120000
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from nldpg.cli import RunConfig, adaptive_loop, export_csv


def slope(records, key="eta"):
    tail = records[-4:]
    return -np.polyfit(np.log([r.ndof for r in tail]), np.log([getattr(r, key) for r in tail]), 1)[0]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="example-a-data")
    p.add_argument("--theta", type=float, default=0.3)
    p.add_argument("--max-ndof", type=int, default=120_000)
    p.add_argument("--eig-max-ndof", type=int, default=10_000)
    p.add_argument("--out", default="results")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    runs = {
        "uniform": RunConfig(problem="lshape", model=args.model, levels=50, max_ndof=args.max_ndof,
                             eig_max_ndof=args.eig_max_ndof),
        "adaptive": RunConfig(problem="lshape", model=args.model, refine="adaptive", theta=args.theta,
                              levels=200, max_ndof=args.max_ndof, eig_max_ndof=args.eig_max_ndof),
    }
    for name, cfg in runs.items():
        records, _ = adaptive_loop(cfg)
        export_csv(records, out / f"lshape_{name}.csv")
        print(f"{name}: {len(records)} levels, final ndof {records[-1].ndof}, "
              f"eta slope {slope(records):.3f}", end="")
        if records[0].energy_diff_sqrt is not None:
            print(f", energy_diff_sqrt slope {slope(records, 'energy_diff_sqrt'):.3f}", end="")
        print()
        for r in records:
            lam = "" if r.lambda_min is None else f" lambda_min {r.lambda_min:.4f}"
            print(f"  {r.ndof:>7} it {r.newton_iters} eta {r.eta:.9g} vmax {r.vmax:.6g}{lam}")


if __name__ == "__main__":
    main()
