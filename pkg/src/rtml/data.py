"""Datasets, file parsers, the two-spirals generator, folds and z-scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import make_rng

DEFAULT_LIBSVM_NAMES = ("-1", "+1")


class DataError(ValueError):
    """Raised for malformed input data or invalid data-level arguments."""


class ParseError(DataError):
    def __init__(self, kind: str, line: int | None, detail: str = ""):
        self.kind = kind
        self.line = line
        where = f" (line {line})" if line is not None else ""
        msg = f"{kind}{where}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense binary-labelled sample set.

    ``ids`` are stable sample identifiers; subsets keep the ids of the parent so
    results can always be traced back to rows of the loaded file.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, str] = ("C1", "C2")
    ids: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(0, 0)
        if x.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        ids = np.arange(len(y), dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64).reshape(-1)
        if not (x.shape[0] == len(y) == len(ids)):
            raise DataError(f"row count mismatch: features {x.shape[0]}, labels {len(y)}, ids {len(ids)}")
        if len(np.unique(ids)) != len(ids):
            raise DataError("sample ids must be unique")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if not np.isfinite(x).all():
            raise DataError("features must be finite")
        names = tuple(str(c) for c in self.class_names)
        if len(names) != 2:
            raise DataError("exactly two class names are required")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "class_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n

    def class_counts(self) -> tuple[int, int]:
        c1 = int(self.labels.sum())
        return self.n - c1, c1

    def has_both_classes(self) -> bool:
        c0, c1 = self.class_counts()
        return c0 > 0 and c1 > 0

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        """Rows by position (not by id)."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.class_names, self.ids[rows])

    def with_labels(self, labels: np.ndarray, class_names: tuple[str, str] | None = None) -> "Dataset":
        return Dataset(self.features, labels, class_names or self.class_names, self.ids)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.class_names, self.ids)

    def equals(self, other: "Dataset", atol: float = 0.0) -> bool:
        return (
            self.features.shape == other.features.shape
            and np.allclose(self.features, other.features, rtol=0.0, atol=atol)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
            and self.class_names == other.class_names
        )


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _parse_float(tok: str, line: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError("MalformedToken", line, repr(tok)) from None
    if not math.isfinite(v):
        raise ParseError("NonFinite", line, repr(tok))
    return v


def parse_libsvm(text: str) -> Dataset:
    """Parse LIBSVM sparse text (``<label> <idx>:<val> ...``) into a dense Dataset.

    Positive labels map to class 1, everything else to class 0. Lines starting
    with ``#`` are comments; ``# classes: <name0> <name1>`` sets class names.
    """
    rows: list[dict[int, float]] = []
    labels: list[int] = []
    raw_labels: set[float] = set()
    names = DEFAULT_LIBSVM_NAMES
    d = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("classes:"):
                parts = body[len("classes:"):].split()
                if len(parts) != 2:
                    raise ParseError("MalformedToken", lineno, "class header needs two names")
                names = (parts[0], parts[1])
            continue
        tokens = line.split()
        lab = _parse_float(tokens[0], lineno)
        raw_labels.add(lab)
        if len(raw_labels) > 2:
            raise ParseError("TooManyLabels", lineno, "only binary data is supported")
        row: dict[int, float] = {}
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError("MalformedToken", lineno, repr(tok))
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError("MalformedToken", lineno, repr(tok)) from None
            if idx < 1:
                raise ParseError("MalformedToken", lineno, f"index must be >= 1, got {idx}")
            if idx <= last:
                raise ParseError("NonIncreasingIndex", lineno, f"{idx} after {last}")
            row[idx] = _parse_float(val_s, lineno)
            last = idx
        d = max(d, last)
        rows.append(row)
        labels.append(1 if lab > 0 else 0)
    if not rows:
        raise ParseError("EmptyInput", None, "no samples found")
    x = np.zeros((len(rows), d))
    for i, row in enumerate(rows):
        for idx, v in row.items():
            x[i, idx - 1] = v
    return Dataset(x, np.array(labels), names)


def parse_delimited(text: str, delimiter: str = ",", label_column: str = "last") -> Dataset:
    """Parse CSV/KEEL-style rows; '@' and '%' lines are metadata and skipped.

    Class names are the sorted distinct label strings, mapped to 0 and 1.
    """
    if label_column not in ("last", "first"):
        raise DataError(f"label_column must be 'last' or 'first', got {label_column!r}")
    feats: list[list[float]] = []
    raw: list[str] = []
    width = None
    seen: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "@%":
            continue
        fields = [f.strip() for f in s.split(delimiter)]
        if width is None:
            width = len(fields)
            if width < 2:
                raise ParseError("RaggedRow", lineno, "need at least one feature and a label")
        elif len(fields) != width:
            raise ParseError("RaggedRow", lineno, f"expected {width} fields, got {len(fields)}")
        lab = fields[-1] if label_column == "last" else fields[0]
        vals = fields[:-1] if label_column == "last" else fields[1:]
        if lab not in seen:
            seen.append(lab)
            if len(seen) > 2:
                raise ParseError("TooManyLabels", lineno, f"third label {lab!r}")
        row = []
        for v in vals:
            try:
                fv = float(v)
            except ValueError:
                raise ParseError("NonNumeric", lineno, repr(v)) from None
            if not math.isfinite(fv):
                raise ParseError("NonFinite", lineno, repr(v))
            row.append(fv)
        feats.append(row)
        raw.append(lab)
    if not feats:
        raise ParseError("EmptyInput", None, "no samples found")
    names = sorted(seen)
    if len(names) == 1:
        names.append(names[0] + "'")
    lookup = {name: i for i, name in enumerate(names)}
    return Dataset(np.array(feats), np.array([lookup[r] for r in raw]), (names[0], names[1]))


def _fmt(v: float) -> str:
    return repr(float(v))


def to_libsvm(ds: Dataset) -> str:
    """LIBSVM text; zero entries are omitted, values use shortest round-trip repr."""
    out = []
    if ds.class_names != DEFAULT_LIBSVM_NAMES:
        out.append(f"# classes: {ds.class_names[0]} {ds.class_names[1]}")
    for x, y in zip(ds.features, ds.labels):
        toks = ["+1" if y == 1 else "-1"]
        toks += [f"{j + 1}:{_fmt(v)}" for j, v in enumerate(x) if v != 0.0]
        out.append(" ".join(toks))
    return "\n".join(out) + "\n"


def sniff_format(text: str) -> str:
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if s[0] in "@%":
            return "keel"
        if ":" in s.split()[min(1, len(s.split()) - 1)]:
            return "libsvm"
        if "," in s:
            return "csv"
        return "libsvm"
    return "libsvm"


def load_dataset(path: str | Path, fmt: str = "auto") -> Dataset:
    """Read a dataset file. ``fmt`` is one of auto, libsvm, csv, keel."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if fmt == "auto":
        fmt = sniff_format(text)
    if fmt == "libsvm":
        return parse_libsvm(text)
    if fmt in ("csv", "keel"):
        return parse_delimited(text, ",", "last")
    raise DataError(f"unknown data format {fmt!r}")


def save_libsvm(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(to_libsvm(ds), encoding="utf-8")


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------


def generate_two_spirals(n: int, noise_variance: float = 0.0, seed: int = 0, radius: float = 1.0) -> Dataset:
    """Two interleaved spirals, n/2 points each, two full turns from 0.1*radius to radius.

    Class 1 is the point reflection of class 0. Gaussian noise of the given
    per-coordinate variance is added to every point after scaling, so the
    noise level is only meaningful relative to ``radius``.
    """
    if n < 4 or n % 2:
        raise DataError(f"n must be even and >= 4, got {n}")
    if not noise_variance >= 0.0:
        raise DataError(f"noise_variance must be >= 0, got {noise_variance}")
    if not radius > 0.0:
        raise DataError(f"radius must be > 0, got {radius}")
    m = n // 2
    t = np.arange(m) / (m - 1)
    r = radius * (0.1 + 0.9 * t)
    phi = 4.0 * np.pi * t
    arm = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    x = np.vstack([arm, -arm])
    if noise_variance > 0.0:
        x = x + make_rng(seed, "spirals").normal(0.0, math.sqrt(noise_variance), size=x.shape)
    y = np.repeat([0, 1], m)
    return Dataset(x, y, ("C1", "C2"))


# --------------------------------------------------------------------------
# folds
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    stratified: bool = True

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def splits(self):
        for f in range(self.k):
            yield self.train_rows(f), self.test_rows(f)

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def stratified_kfold(labels: Sequence[int] | np.ndarray, k: int, seed: int) -> FoldPlan:
    """Seeded stratified k-fold assignment.

    Each class is shuffled and dealt round-robin, continuing the deal across
    classes so total fold sizes also differ by at most one. Falls back to an
    unstratified deal (``stratified=False``) when a present class has fewer
    than k members.
    """
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = len(y)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds sample count {n}")
    rng = make_rng(seed, "kfold")
    assign = np.empty(n, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    stratified = bool((counts >= k).all())
    if stratified:
        offset = 0
        for c in classes:
            rows = rng.permutation(np.flatnonzero(y == c))
            assign[rows] = (offset + np.arange(len(rows))) % k
            offset += len(rows)
    else:
        rows = rng.permutation(n)
        assign[rows] = np.arange(n) % k
    return FoldPlan(k, _frozen(assign), int(seed), stratified)


# --------------------------------------------------------------------------
# normalisation and priors
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Normalizer:
    means: np.ndarray
    stddevs: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != len(self.means):
            raise DataError(f"dimension mismatch: normalizer has d={len(self.means)}, data has d={x.shape[-1]}")
        return (x - self.means) / self.stddevs


def normalize_fit(ds: Dataset) -> Normalizer:
    x = ds.features
    means = x.mean(axis=0)
    std = x.std(axis=0)
    std[np.ptp(x, axis=0) == 0] = 1.0
    return Normalizer(_frozen(means), _frozen(std))


def normalize_apply(norm: Normalizer, ds: Dataset) -> Dataset:
    return ds.with_features(norm.apply(ds.features))


def class_priors(ds: Dataset) -> tuple[float, float]:
    if ds.n == 0:
        raise DataError("class priors of an empty dataset")
    p0 = ds.class_counts()[0] / ds.n
    return p0, 1.0 - p0
