"""Command-line entry point: ``rtml <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 training failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .algorithm import ConfigError, ModelFormatError, RtmlConfig, rtml_load, rtml_predict_batch, rtml_save, rtml_train
from .data import DataError, generate_two_spirals, load_dataset, save_libsvm
from .model import KINDS, ClassifierSpec, DimensionError, TrainError
from .reverse import REVERSE_MODES, DegenerateColumn, cv_confusion_matrix
from .simplicity import SCORE_MODES

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3
HELP_WIDTH = 100


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if action.required:
            return f"{action.help} (required)"
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def _formatter(prog):
    # fixed width so help text does not depend on the terminal
    return _HelpFormatter(prog, width=HELP_WIDTH, max_help_position=36)


# ---- typed flag values ------------------------------------------------------


def _ranged(kind, lo=None, hi=None, lo_open=False, desc=None):
    def conv(s):
        try:
            v = kind(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {kind.__name__}, got {s!r}") from None
        bad = (lo is not None and (v <= lo if lo_open else v < lo)) or (hi is not None and v > hi)
        if bad:
            raise argparse.ArgumentTypeError(f"must be in {desc}, got {s}")
        return v

    return conv


unit_interval = _ranged(float, 0.0, 1.0, desc="[0, 1]")
positive_float = _ranged(float, 0.0, lo_open=True, desc="(0, inf)")
nonneg_float = _ranged(float, 0.0, desc="[0, inf)")
count2 = _ranged(int, 2, desc="[2, inf)")
count1 = _ranged(int, 1, desc="[1, inf)")
seed_int = _ranged(int, 0, 2**64 - 1, desc="[0, 2^64-1]")


def odd_count(s):
    v = count1(s)
    if v % 2 == 0:
        raise argparse.ArgumentTypeError(f"must be an odd count >= 1, got {s}")
    return v


def _list_of(conv):
    def parse(s):
        if isinstance(s, (list, tuple)):
            return list(s)
        items = [t.strip() for t in str(s).split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("expected a comma-separated list")
        return [conv(t) for t in items]

    return parse


def _bool(s):
    if isinstance(s, bool):
        return s
    low = str(s).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


# ---- parser -------------------------------------------------------------------


def _common(p, out_required=True):
    p.add_argument("--seed", type=seed_int, default=42, help="master random seed")
    p.add_argument("--out", required=out_required, metavar="DIR", help="output directory")
    p.add_argument("--config", metavar="FILE", help="key=value file; flags override it")


def _rtml_flags(p):
    g = p.add_argument_group("RTML configuration")
    g.add_argument("--theta", type=unit_interval, default=0.5, help="simplicity threshold, in [0, 1]")
    g.add_argument("--k-folds", type=count2, default=10, help="folds for the committee and confusion matrix")
    g.add_argument("--n-models", type=count1, default=40, help="committee size")
    g.add_argument("--reverse-mode", choices=REVERSE_MODES, default="model_prob", help="comparison probabilities")
    g.add_argument("--alpha", type=nonneg_float, default=1.0, help="Laplace smoothing of the reverse posteriors")
    g.add_argument("--base", choices=KINDS, default="softmax", help="base classifier")
    g.add_argument("--learning-rate", type=positive_float, default=0.1, help="softmax step size")
    g.add_argument("--epochs", type=count1, default=500, help="softmax gradient steps")
    g.add_argument("--l2", type=nonneg_float, default=1e-4, help="softmax L2 penalty")
    g.add_argument("--discrim", choices=KINDS, default="svmknn", help="easy/hard discriminator")
    g.add_argument("--discrim-k", type=odd_count, default=5, help="discriminator neighbours")
    g.add_argument("--svm-c", type=positive_float, default=10.0, help="linear SVM cost")
    g.add_argument("--score-mode", choices=SCORE_MODES, default="all", help="which committee votes count")
    g.add_argument("--cm-on-hard-only", type=_bool, default=False, metavar="BOOL",
                   help="confusion matrix from hard samples only")
    g.add_argument("--normalize", type=_bool, default=True, metavar="BOOL", help="z-score features")


def _data_flag(p, many=False):
    p.add_argument("--data", required=True, metavar="PATH" + ("[,PATH...]" if many else ""),
                   help="dataset file (libsvm, or comma-separated KEEL/CSV)")
    p.add_argument("--format", dest="data_format", choices=("auto", "libsvm", "csv", "keel"), default="auto",
                   help="input data format")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rtml", formatter_class=_formatter,
                     description="Reverse-thinking meta-classification: training, prediction and benchmarks.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-spirals", formatter_class=_formatter, help="write a two-spirals dataset",
                       description="Write OUT/spirals.libsvm.")
    p.add_argument("--n", type=count2, default=200, help="number of points (even)")
    p.add_argument("--variance", type=nonneg_float, default=0.0, help="Gaussian noise variance")
    p.add_argument("--radius", type=positive_float, default=bench.SPIRAL_RADIUS, help="outer radius")
    _common(p)

    p = sub.add_parser("train", formatter_class=_formatter, help="train an RTML model",
                       description="Write OUT/model.rtml, OUT/scores.csv and OUT/cm-train.csv.")
    _data_flag(p)
    _common(p)
    _rtml_flags(p)

    p = sub.add_parser("predict", formatter_class=_formatter, help="predict with a saved model",
                       description="Write OUT/predictions.csv, plus OUT/trace.jsonl with --trace.")
    p.add_argument("--model", required=True, metavar="FILE", help="model bundle from train")
    _data_flag(p)
    p.add_argument("--trace", action="store_true", help="write one routing record per sample")
    _common(p)

    p = sub.add_parser("eval", formatter_class=_formatter, help="cross-validated accuracy table",
                       description="Write OUT/report.md, OUT/report.csv, OUT/cm-*.csv and, for 2-D data, "
                                   "OUT/scatter-*.svg.")
    _data_flag(p, many=True)
    p.add_argument("--algs", type=_list_of(str), default="softmax,softmax-easy,rtml",
                   help="algorithms: softmax, softmax-easy, rtml")
    p.add_argument("--k", type=count2, default=10, help="outer folds")
    p.add_argument("--inner-k", type=count2, default=10, help="inner folds for parameter selection")
    p.add_argument("--select", type=_bool, default=True, metavar="BOOL", help="select theta and discrim-k by inner CV")
    _common(p)
    _rtml_flags(p)

    p = sub.add_parser("sweep-theta", formatter_class=_formatter, help="accuracy as a function of theta",
                       description="Write OUT/report.md and OUT/report.csv.")
    _data_flag(p)
    p.add_argument("--grid", type=_list_of(unit_interval), default=",".join(f"{t:g}" for t in bench.THETA_GRID),
                   help="theta values")
    p.add_argument("--k", type=count2, default=10, help="folds")
    _common(p)
    _rtml_flags(p)

    p = sub.add_parser("sweep-models", formatter_class=_formatter, help="accuracy as a function of committee size",
                       description="Write OUT/report.md and OUT/report.csv.")
    _data_flag(p)
    p.add_argument("--grid", type=_list_of(count1), default="5,15,25,35,45", help="committee sizes")
    p.add_argument("--k", type=count2, default=10, help="folds")
    _common(p)
    _rtml_flags(p)

    p = sub.add_parser("noise-grid", formatter_class=_formatter, help="two-spirals size x noise grid",
                       description="Write OUT/report.md and OUT/report.csv.")
    p.add_argument("--sizes", type=_list_of(count2), default="100,200,400", help="dataset sizes (even)")
    p.add_argument("--variances", type=_list_of(nonneg_float), default="0,0.02,0.04,0.06", help="noise variances")
    p.add_argument("--grid", type=_list_of(unit_interval), default=",".join(f"{t:g}" for t in bench.THETA_GRID),
                   help="theta values")
    p.add_argument("--radius", type=positive_float, default=bench.SPIRAL_RADIUS, help="spiral outer radius")
    p.add_argument("--k", type=count2, default=10, help="folds")
    _common(p)
    _rtml_flags(p)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def read_config(path: str) -> dict[str, str]:
    """Parse a key=value file; '#' starts a comment, keys may use '-' or '_'."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config {path} line {n}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config(args.config)
        sp = _subparser(parser, args.command)
        known = {a.dest: a for a in sp._actions if a.dest not in ("help", "config", "out")}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise UsageError(f"config {args.config}: unknown key(s) {', '.join(unknown)}")
        for key, value in values.items():
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                try:
                    value = _bool(value)
                except argparse.ArgumentTypeError as exc:
                    raise UsageError(f"config {args.config}: {key}: {exc}") from None
            sp.set_defaults(**{key: value})
        args = parser.parse_args(argv)
        args.config_values = values
    return args


def config_from_args(args) -> RtmlConfig:
    base = ClassifierSpec(kind=args.base, learning_rate=args.learning_rate, epochs=args.epochs,
                          l2_penalty=args.l2, svm_c=args.svm_c)
    discrim = ClassifierSpec(kind=args.discrim, k_neighbors=args.discrim_k, svm_c=args.svm_c,
                             learning_rate=args.learning_rate, epochs=args.epochs, l2_penalty=args.l2)
    return RtmlConfig(base_spec=base, discrim_spec=discrim, theta=args.theta, k_folds=args.k_folds,
                      n_models=args.n_models, reverse_mode=args.reverse_mode, alpha=args.alpha, seed=args.seed,
                      normalize=args.normalize, cm_on_hard_only=args.cm_on_hard_only, score_mode=args.score_mode)


# ---- commands -------------------------------------------------------------------


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _workers() -> int:
    try:
        return bench.default_workers()
    except ValueError as exc:
        raise UsageError(f"rtml: error: {exc}") from None


def _dataset_name(path: str) -> str:
    return Path(path).stem


def cmd_gen_spirals(args) -> None:
    if args.n % 2:
        raise UsageError(f"--n must be even, got {args.n}")
    ds = generate_two_spirals(args.n, args.variance, args.seed, args.radius)
    out = _outdir(args)
    save_libsvm(ds, out / "spirals.libsvm")
    print(f"wrote {out / 'spirals.libsvm'} ({ds.n} points, variance {args.variance:g}, radius {args.radius:g})")


def cmd_train(args) -> None:
    cfg = config_from_args(args)
    ds = load_dataset(args.data, args.data_format)
    model = rtml_train(ds, cfg)
    out = _outdir(args)
    _write(out / "model.rtml", rtml_save(model))
    _write(out / "scores.csv", model.scores.to_csv())
    cm = cv_confusion_matrix(ds, cfg.base_spec, cfg.k_folds, cfg.seed)
    _write(out / "cm-train.csv", cm.to_csv(ds.class_names))
    part = model.partition
    print(f"trained on {ds.n} samples: {part.n_easy} easy, {part.n_hard} hard at theta={cfg.theta:g} "
          f"(degenerate: {model.degenerate})")
    print(f"wrote {out / 'model.rtml'}")


def cmd_predict(args) -> None:
    try:
        text = Path(args.model).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model {args.model}: {exc}") from exc
    model = rtml_load(text)
    ds = load_dataset(args.data, args.data_format)
    res = rtml_predict_batch(model, ds.features)
    out = _outdir(args)
    lines = ["id,label,class,path,flipped"]
    for i in range(ds.n):
        lab = int(res.label[i])
        lines.append(f"{int(ds.ids[i])},{lab},{model.class_names[lab]},{'easy' if res.easy[i] else 'hard'},"
                     f"{int(res.flipped[i])}")
    _write(out / "predictions.csv", "\n".join(lines) + "\n")
    if args.trace:
        recs = [json.dumps({"id": int(ds.ids[i]), **res.trace(i)}, sort_keys=True) for i in range(ds.n)]
        _write(out / "trace.jsonl", "\n".join(recs) + "\n")
    acc = float(np.mean(res.label == ds.labels))
    print(f"predicted {ds.n} samples: {int(res.easy.sum())} easy path, {int(res.flipped.sum())} flipped; "
          f"accuracy against file labels {acc:.4f}")


def _write_report(out: Path, report: bench.ExperimentReport) -> None:
    _write(out / "report.md", bench.emit_report(report, "markdown"))
    _write(out / "report.csv", bench.emit_report(report, "csv"))


def cmd_eval(args) -> None:
    cfg = config_from_args(args)
    try:
        algs = bench.standard_algorithms(cfg, args.select, args.algs)
    except ValueError as exc:
        raise UsageError(f"rtml eval: error: argument --algs: {exc}") from None
    workers = _workers()
    out = _outdir(args)
    report = bench.ExperimentReport(args.seed)
    datasets = {}
    for path in _list_of(str)(args.data):
        name = _dataset_name(path)
        ds = load_dataset(path, args.data_format)
        datasets[name] = ds
        report.merge(bench.cv_evaluate(ds, algs, args.k, args.seed, name, args.inner_k, workers=workers))
    _write_report(out, report)
    for (name, alg), cm in report.confusion.items():
        _write(out / f"cm-{bench.safe_name(name)}-{bench.safe_name(alg)}.csv",
               cm.to_csv(datasets[name].class_names))
        ds = datasets[name]
        if ds.d == 2:
            svg = bench.emit_scatter_svg(ds, report.predictions[(name, alg)], title=f"{name}: {alg}")
            _write(out / f"scatter-{bench.safe_name(name)}-{bench.safe_name(alg)}.svg", svg)
    for r in report.rows:
        print(f"{r.dataset:20s} {r.algorithm:24s} {r.mean:.4f}±{r.std:.4f}")


def _sweep_cmd(args, fn) -> None:
    cfg = config_from_args(args)
    ds = load_dataset(args.data, args.data_format)
    name = _dataset_name(args.data)
    curve = fn(ds, cfg, args.grid, args.k, args.seed, name, _workers())
    report = bench.ExperimentReport(args.seed, curves=[curve])
    _write_report(_outdir(args), report)
    for g, m in zip(curve.grid, curve.means):
        print(f"{curve.parameter}={g:g}\t{m:.4f}")


def cmd_noise_grid(args) -> None:
    cfg = config_from_args(args)
    odd = [s for s in args.sizes if s % 2]
    if odd:
        raise UsageError(f"--sizes must be even, got {odd}")
    report = bench.noise_grid(args.sizes, args.variances, args.grid, cfg, args.seed, args.k, args.radius,
                              _workers())
    _write_report(_outdir(args), report)
    for c in report.grid:
        print(f"n={c.size:4d} variance={c.variance:<5g} SOFTMAX {c.baseline.mean:.4f}  best RTML {c.best_rtml:.4f}")


COMMANDS = {
    "gen-spirals": cmd_gen_spirals,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep-theta": lambda a: _sweep_cmd(a, bench.sweep_theta),
    "sweep-models": lambda a: _sweep_cmd(a, bench.sweep_models),
    "noise-grid": cmd_noise_grid,
}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        print(f"# rtml {args.command} seed={args.seed}")
        COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        detail = str(exc).split(": ", 1)[-1]
        print(f"rtml: error: --{exc.field.replace('_', '-')}: {detail}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, DimensionError, OSError) as exc:
        print(f"rtml: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainError, DegenerateColumn, ValueError, FloatingPointError) as exc:
        print(f"rtml: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    return EXIT_OK


def main() -> None:
    sys.exit(run())
