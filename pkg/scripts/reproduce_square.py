"""Uniform refinement on the square with the manufactured solution.

Writes ``<out>/square.csv`` and prints it next to the benchmark reference
values for eta and vmax.

    python3 scripts/reproduce_square.py --levels 6
"""

import argparse
import logging
from pathlib import Path

from nldpg.cli import RunConfig, adaptive_loop, csv_text, export_csv
from nldpg.problems import C_F_SQUARE, SQUARE_THRESHOLD_REPORTED
from nldpg.estimator import uniqueness_threshold
from nldpg.nonlinearity import get_model

REFERENCE = {  # ndof: (eta, vmax)
    33: (12.4270, 1.7710),
    129: (6.2430, 1.3695),
    513: (3.1251, 0.79579),
    2049: (1.5630, 0.42732),
    8193: (0.78155, 0.22193),
    32769: (0.39078, 0.11323),
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="example-a-data")
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--eig-max-ndof", type=int, default=40_000)
    p.add_argument("--out", default="results")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = RunConfig(model=args.model, levels=args.levels, eig_max_ndof=args.eig_max_ndof)
    records, _ = adaptive_loop(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(records, out / "square.csv")
    print(csv_text(records))

    thr = uniqueness_threshold(get_model(args.model), C_F_SQUARE)
    print(f"uniqueness threshold {thr:.5f} (reported {SQUARE_THRESHOLD_REPORTED})")
    print(f"{'ndof':>6} {'eta':>10} {'ref':>10} {'vmax':>9} {'ref':>9} {'bound':>8} {'error':>9}")
    for r in records:
        ref_eta, ref_vmax = REFERENCE.get(r.ndof, (float("nan"),) * 2)
        print(f"{r.ndof:>6} {r.eta:10.5f} {ref_eta:10.5f} {r.vmax:9.5f} {ref_vmax:9.5f} "
              f"{r.guaranteed_bound:8.3f} {r.error_energy:9.5f}")


if __name__ == "__main__":
    main()
