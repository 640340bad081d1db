"""Confusion matrices, reverse posteriors and the single-flip correction rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, stratified_kfold
from .model import ClassifierSpec, fit

REVERSE_MODES = ("model_prob", "class_prior")


class DegenerateColumn(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CvRecords:
    """One out-of-fold prediction per sample, aligned with the dataset rows."""

    ids: np.ndarray
    true: np.ndarray
    predicted: np.ndarray
    fold: np.ndarray
    k_folds: int
    seed: int


def cv_predictions(train: Dataset, spec: ClassifierSpec, k: int, seed: int) -> CvRecords:
    if not train.has_both_classes():
        raise ValueError("cross-validated confusion matrix needs both classes")
    plan = stratified_kfold(train.labels, k, seed)
    pred = np.full(train.n, -1, dtype=np.int64)
    for tr, te in plan.splits():
        model = fit(spec, train.subset(tr))
        pred[te] = model.predict(train.features[te])
    return CvRecords(train.ids, train.labels, pred, plan.assignments, k, int(seed))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i][j]``: samples of true class i predicted as class j."""

    counts: np.ndarray
    k_folds: int = 0
    seed: int = 0

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def rates(self) -> np.ndarray:
        """Row-normalised form (each row sums to 1; empty rows stay 0)."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros((2, 2)), where=rows > 0)

    def to_csv(self, class_names=("C1", "C2")) -> str:
        r = self.rates()
        a, b = class_names
        lines = [f"true\\pred,{a},{b},{a}_rate,{b}_rate"]
        for i, name in enumerate(class_names):
            c = self.counts[i]
            lines.append(f"{name},{c[0]},{c[1]},{r[i, 0]:.4f},{r[i, 1]:.4f}")
        return "\n".join(lines) + "\n"


def confusion_from_records(records: CvRecords, mask: np.ndarray | None = None) -> ConfusionMatrix:
    t, p = records.true, records.predicted
    if mask is not None:
        t, p = t[mask], p[mask]
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, records.k_folds, records.seed)


def cv_confusion_matrix(train: Dataset, spec: ClassifierSpec, k: int = 10, seed: int = 0) -> ConfusionMatrix:
    """Each sample predicted once by the model trained without its fold."""
    return confusion_from_records(cv_predictions(train, spec, k, seed))


@dataclass(frozen=True, eq=False)
class ReversePosteriors:
    """``post[i][j]`` = P(true = C_i | predicted = C_j); columns sum to 1."""

    post: np.ndarray
    alpha: float = 0.0


def reverse_posteriors(cm: ConfusionMatrix, alpha: float = 1.0) -> ReversePosteriors:
    """Column-normalised confusion counts with Laplace smoothing ``alpha``."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    c = cm.counts.astype(np.float64)
    col = c.sum(axis=0)
    if alpha == 0 and (col == 0).any():
        j = int(np.flatnonzero(col == 0)[0])
        raise DegenerateColumn(f"no samples predicted as class {j}; use alpha > 0")
    post = (c + alpha) / (col + 2.0 * alpha)
    post.setflags(write=False)
    return ReversePosteriors(post, float(alpha))


def reverse_decide(predicted: int, comparison_probs, posteriors: ReversePosteriors) -> int:
    """Flip ``predicted`` = a to b when P(true=b | pred=a) exceeds q_b. At most one flip."""
    q = np.asarray(comparison_probs, dtype=np.float64)
    if abs(q[0] + q[1] - 1.0) > 1e-9:
        raise ValueError(f"comparison probabilities must sum to 1, got {q.tolist()}")
    a = int(predicted)
    b = 1 - a
    return b if posteriors.post[b, a] > q[b] else a


def reverse_decide_batch(predicted: np.ndarray, q: np.ndarray, posteriors: ReversePosteriors) -> np.ndarray:
    """Vectorised :func:`reverse_decide`; ``q`` has one (q0, q1) row per sample."""
    a = np.asarray(predicted, dtype=np.int64)
    b = 1 - a
    rows = np.arange(len(a))
    flip = posteriors.post[b, a] > q[rows, b]
    return np.where(flip, b, a)


def theorem1_ratio(p21: float, p12: float, p1: float, p2: float) -> float:
    """(P(C2|C1) / P(C1|C2)) * (P(C1=X) / P(C2=X))**2.

    The ratio of the two reverse posteriors P(C1=X|C2=X) / P(C2=X|C1=X);
    above 1 the correction favours C1.
    """
    for name, v in (("p21", p21), ("p12", p12), ("p1", p1), ("p2", p2)):
        if not 0.0 < v < 1.0:
            raise ValueError(f"{name} must lie strictly inside (0, 1), got {v}")
    return (p21 / p12) * (p1 / p2) ** 2


def flip_condition(p21: float, p12: float, p1: float, p2: float) -> bool:
    """P(C2|C1) / P(C1|C2) > (P(C2=X) / P(C1=X))**2, the rearranged form of ratio > 1."""
    return p21 / p12 > (p2 / p1) ** 2
