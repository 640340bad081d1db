"""Cross-validated comparison of SOFTMAX (all data), SOFTMAX (simple data) and RTML.

Evaluates every dataset found in the data directory (RTML_DATA_DIR, default ./data)
plus a noisy two-spirals draw, and writes report.md / report.csv.

    python3 scripts/reproduce_table4.py --out results/table4
"""

import argparse
import time
from pathlib import Path

from _common import data_dir, write
from rtml.algorithm import RtmlConfig
from rtml.bench import SPIRAL_RADIUS, ExperimentReport, cv_evaluate, default_workers, emit_report, standard_algorithms
from rtml.data import generate_two_spirals, load_dataset

SUFFIXES = (".libsvm", ".dat", ".csv")


def datasets(include_spirals: bool):
    for path in sorted(data_dir().iterdir()):
        if path.suffix in SUFFIXES:
            yield path.stem, load_dataset(path)
    if include_spirals:
        yield "spirals", generate_two_spirals(200, 0.02, 0, radius=SPIRAL_RADIUS)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("results/table4"))
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--inner-k", type=int, default=10)
    ap.add_argument("--no-spirals", action="store_true")
    args = ap.parse_args()

    algs = standard_algorithms(RtmlConfig())
    report = ExperimentReport(args.seed)
    for name, ds in datasets(not args.no_spirals):
        t0 = time.perf_counter()
        rep = cv_evaluate(ds, algs, k=args.k, seed=args.seed, name=name, inner_k=args.inner_k,
                          workers=default_workers())
        report = report.merge(rep)
        cells = "  ".join(f"{r.algorithm}={r.mean:.4f}±{r.std:.4f}" for r in rep.rows)
        print(f"{name:<12} n={ds.n:<5} {cells}  ({time.perf_counter() - t0:.0f}s)")
    write(args.out, "report.md", emit_report(report, "markdown"))
    write(args.out, "report.csv", emit_report(report, "csv"))


if __name__ == "__main__":
    main()
