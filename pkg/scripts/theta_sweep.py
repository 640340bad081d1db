"""Accuracy against the simplicity threshold theta (and optionally committee size).

    python3 scripts/theta_sweep.py --data data/titanic.dat --out results/theta
    python3 scripts/theta_sweep.py --out results/theta --models 5,15,25,35,45
"""

import argparse
from pathlib import Path

from _common import write
from rtml.algorithm import RtmlConfig
from rtml.bench import SPIRAL_RADIUS, THETA_GRID, ExperimentReport, default_workers, emit_report, sweep_models, sweep_theta
from rtml.data import generate_two_spirals, load_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", type=Path, help="dataset file; two spirals (n=200, variance 0.02) when omitted")
    ap.add_argument("--out", type=Path, default=Path("results/theta"))
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--models", type=lambda s: tuple(int(v) for v in s.split(",")),
                    help="also sweep committee size over these values")
    args = ap.parse_args()

    if args.data:
        ds, name = load_dataset(args.data), args.data.stem
    else:
        ds, name = generate_two_spirals(200, 0.02, 0, radius=SPIRAL_RADIUS), "spirals"
    workers = default_workers()
    curves = [sweep_theta(ds, RtmlConfig(), THETA_GRID, seed=args.seed, name=name, workers=workers)]
    if args.models:
        curves.append(sweep_models(ds, RtmlConfig(), args.models, seed=args.seed, name=name, workers=workers))
    for c in curves:
        print(f"{c.parameter}: " + "  ".join(f"{g:g}:{m:.4f}" for g, m in zip(c.grid, c.means)))
    rep = ExperimentReport(args.seed, curves=curves)
    write(args.out, "report.md", emit_report(rep, "markdown"))
    write(args.out, "report.csv", emit_report(rep, "csv"))


if __name__ == "__main__":
    main()
