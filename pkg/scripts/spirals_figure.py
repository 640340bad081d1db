"""Scatter plots of cross-validated predictions on two spirals, misclassified points in red.

    python3 scripts/spirals_figure.py --out results/spirals
"""

import argparse
from pathlib import Path

from _common import write
from rtml.algorithm import RtmlConfig
from rtml.bench import (SPIRAL_RADIUS, count_misses, cv_evaluate, default_workers, emit_scatter_svg, safe_name,
                        standard_algorithms)
from rtml.data import generate_two_spirals


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("results/spirals"))
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--variance", type=float, default=0.02)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    ds = generate_two_spirals(args.n, args.variance, args.data_seed, radius=SPIRAL_RADIUS)
    rep = cv_evaluate(ds, standard_algorithms(RtmlConfig()), seed=args.seed, name="spirals", workers=default_workers())
    for row in rep.rows:
        svg = emit_scatter_svg(ds, rep.predictions[("spirals", row.algorithm)], title=row.algorithm)
        print(f"{row.algorithm:<22} accuracy {row.mean:.4f}  misclassified {count_misses(svg)}")
        write(args.out, f"scatter-{safe_name(row.algorithm)}.svg", svg)


if __name__ == "__main__":
    main()
