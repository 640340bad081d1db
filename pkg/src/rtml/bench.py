"""Cross-validated experiments: accuracy tables, parameter sweeps, noise grids, plots."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .algorithm import Prepared, RtmlConfig, finish, finish_routed, prepare, route
from .data import Dataset, generate_two_spirals, normalize_apply, normalize_fit, stratified_kfold
from .model import ClassifierSpec, fit, nearest_neighbors
from .reverse import ConfusionMatrix
from .rng import derive_seed

ALG_KINDS = ("baseline_all", "baseline_easy", "rtml")
THETA_GRID = tuple(round(0.1 * i, 1) for i in range(11))
DISCRIM_K_GRID = (3, 5, 9)
SPIRAL_RADIUS = 2.0


@dataclass(frozen=True)
class AlgorithmUnderTest:
    name: str
    kind: str
    cfg: RtmlConfig = field(default_factory=RtmlConfig)
    select: bool = False  # inner-CV parameter selection

    def __post_init__(self):
        if self.kind not in ALG_KINDS:
            raise ValueError(f"unknown algorithm kind {self.kind!r}")


def standard_algorithms(cfg: RtmlConfig | None = None, select: bool = True, which=("softmax", "softmax-easy", "rtml")):
    """The three Table-4 style columns, by CLI short name."""
    cfg = cfg or RtmlConfig()
    table = {
        "softmax": AlgorithmUnderTest("SOFTMAX (all data)", "baseline_all", cfg, False),
        "softmax-easy": AlgorithmUnderTest("SOFTMAX (simple data)", "baseline_easy", cfg, select),
        "rtml": AlgorithmUnderTest("RTML", "rtml", cfg, select),
    }
    unknown = [w for w in which if w not in table]
    if unknown:
        raise ValueError(f"unknown algorithm(s): {', '.join(unknown)}; expected softmax, softmax-easy, rtml")
    return [table[w] for w in which]


# --------------------------------------------------------------------------
# report types
# --------------------------------------------------------------------------


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n-1 denominator; 0 for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return mean, std


@dataclass
class ResultRow:
    dataset: str
    algorithm: str
    fold_accuracies: list[float]
    selected: list[dict] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return mean_std(self.fold_accuracies)[0]

    @property
    def std(self) -> float:
        return mean_std(self.fold_accuracies)[1]


@dataclass
class Curve:
    dataset: str
    algorithm: str
    parameter: str
    grid: list[float]
    fold_accuracies: np.ndarray  # folds x grid

    @property
    def means(self) -> list[float]:
        return [float(v) for v in self.fold_accuracies.mean(axis=0)]


@dataclass
class GridCell:
    size: int
    variance: float
    thetas: list[float]
    rtml: Curve
    baseline: ResultRow

    @property
    def best_rtml(self) -> float:
        return max(self.rtml.means)


@dataclass
class ExperimentReport:
    seed: int
    rows: list[ResultRow] = field(default_factory=list)
    curves: list[Curve] = field(default_factory=list)
    grid: list[GridCell] = field(default_factory=list)
    confusion: dict[tuple[str, str], ConfusionMatrix] = field(default_factory=dict)
    predictions: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)
    class_names: dict[str, tuple[str, str]] = field(default_factory=dict)

    def row(self, dataset: str, algorithm: str) -> ResultRow:
        for r in self.rows:
            if r.dataset == dataset and r.algorithm == algorithm:
                return r
        raise KeyError((dataset, algorithm))

    def merge(self, other: "ExperimentReport") -> "ExperimentReport":
        self.rows += other.rows
        self.curves += other.curves
        self.grid += other.grid
        self.confusion.update(other.confusion)
        self.predictions.update(other.predictions)
        self.class_names.update(other.class_names)
        return self


def _accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(pred == truth))


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def default_workers() -> int:
    raw = os.environ.get("RTML_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"RTML_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# per-fold evaluation
# --------------------------------------------------------------------------


def _prep_key(cfg: RtmlConfig) -> RtmlConfig:
    return replace(cfg, theta=0.0, discrim_spec=ClassifierSpec(kind="svmknn"))


def _easy_model(prep: Prepared, theta: float):
    """Base classifier on the easy part of the prepared training set (all data if degenerate)."""
    mask = prep.scores().scores >= theta
    easy = prep.train.subset(np.flatnonzero(mask))
    if mask.all() or not easy.has_both_classes():
        return prep.inertial
    return fit(prep.cfg.base_spec, easy)


def _normalized(prep: Prepared, x: np.ndarray) -> np.ndarray:
    return prep.normalizer.apply(x) if prep.normalizer is not None else x


def _rtml_grid_accuracy(prep: Prepared, test: Dataset, thetas, ks) -> np.ndarray:
    """Accuracy table (len(thetas) x len(ks)) of RTML on ``test``; neighbours shared across the grid."""
    xt = _normalized(prep, test.features)
    kmax = max(ks)
    tr = prep.train
    nb = nearest_neighbors(tr.features, tr.ids, xt, min(kmax, tr.n))
    out = np.zeros((len(thetas), len(ks)))
    for i, th in enumerate(thetas):
        for j, k in enumerate(ks):
            spec = replace(prep.cfg.discrim_spec, k_neighbors=k)
            model = finish(prep, th, spec)
            if model.discriminator is None:
                easy = np.ones(len(xt), dtype=bool)
            elif model.discriminator.kind == "svmknn":
                easy = model.discriminator.predict_from_neighbors(xt, nb[:, :k]) == 1
            else:
                easy = route(model, xt)
            out[i, j] = _accuracy(finish_routed(model, xt, easy).label, test.labels)
    return out


def _easy_grid_accuracy(prep: Prepared, test: Dataset, thetas) -> np.ndarray:
    xt = _normalized(prep, test.features)
    return np.array([_accuracy(_easy_model(prep, th).predict(xt), test.labels) for th in thetas])


def _select(train: Dataset, cfg: RtmlConfig, inner_k: int, seed: int, thetas, ks, want_rtml: bool, want_easy: bool):
    """Inner-CV parameter choice on ``train`` only; ties go to the first grid entry."""
    plan = stratified_kfold(train.labels, inner_k, seed)
    rt = np.zeros((len(thetas), len(ks)))
    ez = np.zeros(len(thetas))
    for tr, te in plan.splits():
        prep = prepare(train.subset(tr), cfg)
        test = train.subset(te)
        if want_rtml:
            rt += _rtml_grid_accuracy(prep, test, thetas, ks)
        if want_easy:
            ez += _easy_grid_accuracy(prep, test, thetas)
    chosen = {}
    if want_rtml:
        i, j = np.unravel_index(int(np.argmax(rt)), rt.shape)
        chosen["rtml"] = {"theta": float(thetas[i]), "discrim_k": int(ks[j])}
    if want_easy:
        chosen["baseline_easy"] = {"theta": float(thetas[int(np.argmax(ez))])}
    return chosen


@dataclass(frozen=True)
class _FoldJob:
    ds: Dataset
    train_rows: np.ndarray
    test_rows: np.ndarray
    algs: tuple[AlgorithmUnderTest, ...]
    fold: int
    seed: int
    inner_k: int
    thetas: tuple[float, ...]
    ks: tuple[int, ...]


def _run_fold(job: _FoldJob) -> list[tuple[float, np.ndarray, dict]]:
    train = job.ds.subset(job.train_rows)
    test = job.ds.subset(job.test_rows)
    preps: dict[RtmlConfig, Prepared] = {}
    selections: dict[RtmlConfig, dict] = {}

    def get_prep(cfg: RtmlConfig) -> Prepared:
        key = _prep_key(cfg)
        if key not in preps:
            preps[key] = prepare(train, cfg)
        return preps[key]

    def get_selection(cfg: RtmlConfig) -> dict:
        key = _prep_key(cfg)
        if key not in selections:
            kinds = {a.kind for a in job.algs if a.select and _prep_key(a.cfg) == key}
            selections[key] = _select(
                train, cfg, job.inner_k, derive_seed(job.seed, "inner", job.fold), job.thetas, job.ks,
                "rtml" in kinds, "baseline_easy" in kinds,
            )
        return selections[key]

    results = []
    for alg in job.algs:
        cfg = alg.cfg
        if alg.kind == "baseline_all":
            norm = normalize_fit(train) if cfg.normalize else None
            tr = normalize_apply(norm, train) if norm else train
            xt = norm.apply(test.features) if norm else test.features
            pred = fit(cfg.base_spec, tr).predict(xt)
            params = {}
        elif alg.kind == "baseline_easy":
            params = get_selection(cfg)["baseline_easy"] if alg.select else {"theta": cfg.theta}
            prep = get_prep(cfg)
            pred = _easy_model(prep, params["theta"]).predict(_normalized(prep, test.features))
        else:
            if alg.select:
                params = get_selection(cfg)["rtml"]
            else:
                params = {"theta": cfg.theta, "discrim_k": cfg.discrim_spec.k_neighbors}
            prep = get_prep(cfg)
            spec = replace(cfg.discrim_spec, k_neighbors=params["discrim_k"])
            model = finish(prep, params["theta"], spec)
            xt = _normalized(prep, test.features)
            pred = finish_routed(model, xt, route(model, xt)).label
        results.append((_accuracy(pred, test.labels), pred, params))
    return results


def cv_evaluate(ds: Dataset, algs, k: int = 10, seed: int = 42, name: str = "dataset", inner_k: int = 10,
                thetas=THETA_GRID, ks=DISCRIM_K_GRID, workers: int = 1) -> ExperimentReport:
    """Outer stratified k-fold accuracy of each algorithm on identical splits."""
    algs = tuple(algs)
    names = [a.name for a in algs]
    if len(set(names)) != len(names):
        raise ValueError("algorithm names must be unique within a report")
    if not ds.has_both_classes():
        raise ValueError(f"{name}: both classes must be present")
    plan = stratified_kfold(ds.labels, k, derive_seed(seed, "outer"))
    jobs = [
        _FoldJob(ds, plan.train_rows(f), plan.test_rows(f), algs, f, seed, inner_k, tuple(thetas), tuple(ks))
        for f in range(k)
    ]
    per_fold = _map(_run_fold, jobs, workers)
    report = ExperimentReport(seed)
    report.class_names[name] = ds.class_names
    for a_idx, alg in enumerate(algs):
        accs, selected = [], []
        oof = np.full(ds.n, -1, dtype=np.int64)
        for f, res in enumerate(per_fold):
            acc, pred, params = res[a_idx]
            accs.append(acc)
            selected.append(params)
            oof[plan.test_rows(f)] = pred
        report.rows.append(ResultRow(name, alg.name, accs, selected))
        counts = np.zeros((2, 2), dtype=np.int64)
        np.add.at(counts, (ds.labels, oof), 1)
        report.confusion[(name, alg.name)] = ConfusionMatrix(counts, k, seed)
        report.predictions[(name, alg.name)] = oof
    return report


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _SweepJob:
    ds: Dataset
    train_rows: np.ndarray
    test_rows: np.ndarray
    cfg: RtmlConfig
    parameter: str
    grid: tuple


def _run_sweep_fold(job: _SweepJob) -> tuple[list[float], float]:
    train = job.ds.subset(job.train_rows)
    test = job.ds.subset(job.test_rows)
    cfg = job.cfg
    if job.parameter == "n_models":
        cfg = replace(cfg, n_models=max(job.grid))
    prep = prepare(train, cfg)
    xt = _normalized(prep, test.features)
    accs = []
    for g in job.grid:
        if job.parameter == "theta":
            model = finish(prep, theta=g)
        else:
            model = finish(prep, n_models=int(g))
        accs.append(_accuracy(finish_routed(model, xt, route(model, xt)).label, test.labels))
    base = _accuracy(prep.inertial.predict(xt), test.labels)
    return accs, base


def _sweep(ds: Dataset, cfg: RtmlConfig, parameter: str, grid, k: int, seed: int, name: str, workers: int):
    grid = tuple(grid)
    plan = stratified_kfold(ds.labels, k, derive_seed(seed, "outer"))
    jobs = [_SweepJob(ds, plan.train_rows(f), plan.test_rows(f), cfg, parameter, grid) for f in range(k)]
    out = _map(_run_sweep_fold, jobs, workers)
    curve = Curve(name, "RTML", parameter, [float(g) for g in grid], np.array([o[0] for o in out]))
    base = ResultRow(name, "SOFTMAX (all data)", [o[1] for o in out])
    return curve, base


def sweep_theta(ds: Dataset, cfg: RtmlConfig, grid=THETA_GRID, k: int = 10, seed: int = 42, name: str = "dataset",
                workers: int = 1) -> Curve:
    """CV accuracy per threshold; the folds and everything but theta stay fixed."""
    grid = list(grid)
    if any(not 0.0 <= g <= 1.0 for g in grid) or grid != sorted(grid):
        raise ValueError("theta grid must be sorted values in [0, 1]")
    return _sweep(ds, cfg, "theta", grid, k, seed, name, workers)[0]


def sweep_models(ds: Dataset, cfg: RtmlConfig, grid=(5, 15, 25, 35, 45), k: int = 10, seed: int = 42,
                 name: str = "dataset", workers: int = 1) -> Curve:
    """CV accuracy per committee size; smaller committees are prefixes of the largest one."""
    grid = [int(g) for g in grid]
    if any(g < 1 for g in grid) or grid != sorted(grid):
        raise ValueError("n_models grid must be sorted counts >= 1")
    return _sweep(ds, cfg, "n_models", grid, k, seed, name, workers)[0]


@dataclass(frozen=True)
class _CellJob:
    size: int
    variance: float
    thetas: tuple
    cfg: RtmlConfig
    seed: int
    k: int
    radius: float


def _run_cell(job: _CellJob) -> GridCell:
    ds = generate_two_spirals(job.size, job.variance, derive_seed(job.seed, "spirals", job.size), job.radius)
    name = f"spirals-n{job.size}-var{job.variance:g}"
    curve, base = _sweep(ds, job.cfg, "theta", job.thetas, job.k, job.seed, name, 1)
    return GridCell(job.size, job.variance, list(job.thetas), curve, base)


def noise_grid(sizes=(100, 200, 400), variances=(0.0, 0.02, 0.04, 0.06), thetas=THETA_GRID,
               cfg: RtmlConfig | None = None, seed: int = 42, k: int = 10, radius: float = SPIRAL_RADIUS,
               workers: int = 1) -> ExperimentReport:
    """Two-spirals data for every (size, variance); RTML accuracy per theta plus the baseline."""
    cfg = cfg or RtmlConfig()
    if any(s % 2 for s in sizes):
        raise ValueError("spiral sizes must be even")
    jobs = [_CellJob(s, v, tuple(thetas), cfg, seed, k, radius) for s in sizes for v in variances]
    report = ExperimentReport(seed)
    report.grid = _map(_run_cell, jobs, workers)
    return report


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _f4(v: float) -> str:
    return f"{v:.4f}"


def _markdown_table(report: ExperimentReport) -> list[str]:
    datasets = list(dict.fromkeys(r.dataset for r in report.rows))
    algs = list(dict.fromkeys(r.algorithm for r in report.rows))
    lines = ["| No. | Data name | " + " | ".join(algs) + " |", "|---|---|" + "---|" * len(algs)]
    for i, dsname in enumerate(datasets, start=1):
        rows = {r.algorithm: r for r in report.rows if r.dataset == dsname}
        best = max(rows.values(), key=lambda r: r.mean)
        cells = []
        for a in algs:
            r = rows.get(a)
            if r is None:
                cells.append("")
                continue
            text = f"{_f4(r.mean)}±{_f4(r.std)}"
            # bold everything within one std of the best mean
            if r.mean >= best.mean - best.std:
                text = f"**{text}**"
            cells.append(text)
        lines.append(f"| {i} | {dsname} | " + " | ".join(cells) + " |")
    return lines


def emit_markdown(report: ExperimentReport) -> str:
    out = ["# RTML benchmark report", "", f"seed: {report.seed}", ""]
    if report.rows:
        k = len(report.rows[0].fold_accuracies)
        out += [f"## Accuracy ({k}-fold cross-validation, mean±sample std)", ""]
        out += _markdown_table(report)
        selected = [r for r in report.rows if any(r.selected)]
        if selected:
            out += ["", "## Selected parameters per fold", ""]
            for r in selected:
                desc = "; ".join(",".join(f"{k}={v}" for k, v in p.items()) for p in r.selected)
                out.append(f"- {r.dataset} / {r.algorithm}: {desc}")
    if report.confusion:
        out += ["", "## Confusion matrices (rows: true class, rate form)", ""]
        for (dsname, alg), cm in report.confusion.items():
            r = cm.rates()
            names = report.class_names.get(dsname, ("C1", "C2"))
            out += [
                f"CF({dsname}, {alg})",
                "",
                f"| true \\ pred | {names[0]} | {names[1]} |",
                "|---|---|---|",
                f"| {names[0]} | {_f4(r[0, 0])} | {_f4(r[0, 1])} |",
                f"| {names[1]} | {_f4(r[1, 0])} | {_f4(r[1, 1])} |",
                "",
            ]
    for c in report.curves:
        out += ["", f"## {c.algorithm} accuracy vs {c.parameter} on {c.dataset}", ""]
        out += [f"| {c.parameter} | mean accuracy |", "|---|---|"]
        out += [f"| {g:g} | {_f4(m)} |" for g, m in zip(c.grid, c.means)]
    if report.grid:
        thetas = report.grid[0].thetas
        out += ["", "## Noise grid (two spirals)", ""]
        out += ["| size | variance | SOFTMAX | best RTML | " + " | ".join(f"θ={t:g}" for t in thetas) + " |"]
        out += ["|---|---|---|---|" + "---|" * len(thetas)]
        for cell in report.grid:
            out.append(
                f"| {cell.size} | {cell.variance:g} | {_f4(cell.baseline.mean)} | {_f4(cell.best_rtml)} | "
                + " | ".join(_f4(m) for m in cell.rtml.means) + " |"
            )
    return "\n".join(out).rstrip() + "\n"


CSV_HEADER = ["kind", "dataset", "algorithm", "parameter", "value", "mean", "std", "n_folds", "folds"]


def emit_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)

    def folds(values) -> str:
        return ";".join(_f4(v) for v in values)

    for r in report.rows:
        w.writerow(["accuracy", r.dataset, r.algorithm, "", "", _f4(r.mean), _f4(r.std), len(r.fold_accuracies),
                    folds(r.fold_accuracies)])
    for c in report.curves:
        for j, g in enumerate(c.grid):
            col = c.fold_accuracies[:, j]
            m, s = mean_std(col)
            w.writerow(["curve", c.dataset, c.algorithm, c.parameter, f"{g:g}", _f4(m), _f4(s), len(col), folds(col)])
    for cell in report.grid:
        dsname = cell.rtml.dataset
        b = cell.baseline
        w.writerow(["grid", dsname, b.algorithm, "", "", _f4(b.mean), _f4(b.std), len(b.fold_accuracies),
                    folds(b.fold_accuracies)])
        for j, g in enumerate(cell.thetas):
            col = cell.rtml.fold_accuracies[:, j]
            m, s = mean_std(col)
            w.writerow(["grid", dsname, "RTML", "theta", f"{g:g}", _f4(m), _f4(s), len(col), folds(col)])
    return buf.getvalue()


def emit_report(report: ExperimentReport, fmt: str = "markdown") -> str:
    if fmt == "markdown":
        return emit_markdown(report)
    if fmt == "csv":
        return emit_csv(report)
    raise ValueError(f"unknown report format {fmt!r}; expected markdown or csv")


CLASS_COLORS = ("#1f77b4", "#2ca02c")
MISS_COLOR = "#d62728"


def emit_scatter_svg(ds: Dataset, predictions, truth=None, size: int = 400, title: str = "") -> str:
    """2-D scatter; misclassified points drawn in red, the rest by true class."""
    if ds.d != 2:
        raise ValueError(f"scatter plots need 2-D data, got d={ds.d}")
    pred = np.asarray(predictions)
    truth = ds.labels if truth is None else np.asarray(truth)
    if len(pred) != ds.n or len(truth) != ds.n:
        raise ValueError("predictions must align with the dataset rows")
    x = ds.features
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    pad = 20
    scale = (size - 2 * pad) / span
    px = pad + (x[:, 0] - lo[0]) * scale[0]
    py = size - pad - (x[:, 1] - lo[1]) * scale[1]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{size // 2}" y="14" font-size="12" text-anchor="middle">{title}</text>')
    misses = 0
    for i in range(ds.n):
        if pred[i] != truth[i]:
            misses += 1
            out.append(f'<circle class="miss" cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="3" fill="{MISS_COLOR}"/>')
        else:
            c = int(truth[i])
            out.append(f'<circle class="c{c}" cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="3" fill="{CLASS_COLORS[c]}"/>')
    out.append(f"<!-- misclassified: {misses} of {ds.n} -->")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def count_misses(svg: str) -> int:
    return svg.count('class="miss"')


def safe_name(name: str) -> str:
    keep = [ch.lower() if ch.isalnum() else "-" for ch in name]
    s = "".join(keep)
    while "--" in s:
        s = s.replace("--", "-")
    return s.strip("-") or "x"


def is_number(s: str) -> bool:
    try:
        return math.isfinite(float(s))
    except ValueError:
        return False
