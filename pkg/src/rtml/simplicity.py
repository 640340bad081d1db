"""Sample simplicity: the fraction of committee models that classify a sample correctly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, stratified_kfold
from .model import ClassifierSpec, TrainedModel, fit
from .rng import derive_seed

SCORE_MODES = ("all", "out_of_fold")


@dataclass(frozen=True, eq=False)
class Committee:
    """Models from repeated k-fold rounds; ``heldout[i]`` marks rows model i never saw."""

    models: tuple[TrainedModel, ...]
    heldout: tuple[np.ndarray, ...]
    k: int
    seed: int

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, i):
        return self.models[i]


def build_committee(train: Dataset, spec: ClassifierSpec, k: int, n_models: int, seed: int) -> Committee:
    """Train ``n_models`` models, each on ``train`` minus one fold.

    Round r uses a fold plan seeded from ``(seed, r)``; the last round is
    truncated so exactly ``n_models`` models come back.
    """
    if n_models < 1:
        raise ValueError(f"n_models must be >= 1, got {n_models}")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    models, heldout = [], []
    r = 0
    while len(models) < n_models:
        plan = stratified_kfold(train.labels, k, derive_seed(seed, "committee", r))
        for f in range(k):
            if len(models) == n_models:
                break
            mask = plan.assignments == f
            models.append(fit(spec, train.subset(np.flatnonzero(~mask))))
            heldout.append(mask)
        r += 1
    return Committee(tuple(models), tuple(heldout), k, int(seed))


def correctness_matrix(committee: Committee, ds: Dataset) -> np.ndarray:
    """Boolean (n_models x n) matrix: model i classifies sample j correctly."""
    return np.vstack([m.predict(ds.features) == ds.labels for m in committee.models])


@dataclass(frozen=True, eq=False)
class SimplicityScores:
    scores: np.ndarray
    ids: np.ndarray
    n_models: int
    committee_seed: int
    correct: np.ndarray  # integer numerators behind ``scores``

    def ranking(self) -> np.ndarray:
        """Ids by descending simplicity, ties by ascending id."""
        order = np.lexsort((self.ids, -self.scores))
        return self.ids[order]

    def to_csv(self) -> str:
        lines = ["id,score"]
        lines += [f"{i},{s!r}" for i, s in zip(self.ids.tolist(), self.scores.tolist())]
        return "\n".join(lines) + "\n"


def scores_from_correctness(correct: np.ndarray, ids: np.ndarray, seed: int, heldout: np.ndarray | None = None) -> SimplicityScores:
    """Scores from a correctness matrix; with ``heldout`` only out-of-fold votes count."""
    n_models = correct.shape[0]
    if heldout is None:
        counts = correct.sum(axis=0)
        scores = counts / n_models
    else:
        counts = (correct & heldout).sum(axis=0)
        seen = heldout.sum(axis=0)
        scores = np.divide(counts, seen, out=np.zeros(len(counts)), where=seen > 0)
    return SimplicityScores(scores, np.asarray(ids), n_models, int(seed), counts.astype(np.int64))


def simplicity_scores(committee: Committee, ds: Dataset, mode: str = "all") -> SimplicityScores:
    """m(X) for every sample of ``ds``.

    ``mode="all"`` lets every model vote on every sample, including those it
    was trained on; ``"out_of_fold"`` counts only votes from models that held
    the sample out.
    """
    if len(committee) == 0:
        raise ValueError("committee is empty")
    if mode not in SCORE_MODES:
        raise ValueError(f"unknown score mode {mode!r}")
    correct = correctness_matrix(committee, ds)
    heldout = np.vstack(committee.heldout) if mode == "out_of_fold" else None
    return scores_from_correctness(correct, ds.ids, committee.seed, heldout)


@dataclass(frozen=True, eq=False)
class Partition:
    easy_ids: np.ndarray
    hard_ids: np.ndarray
    theta: float
    easy_mask: np.ndarray  # aligned with the scored dataset's rows
    ranking: np.ndarray

    @property
    def n_easy(self) -> int:
        return len(self.easy_ids)

    @property
    def n_hard(self) -> int:
        return len(self.hard_ids)


def partition_by_threshold(scores: SimplicityScores, theta: float) -> Partition:
    """Easy samples have m(X) >= theta, hard ones m(X) < theta."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    easy = scores.scores >= theta
    part = Partition(scores.ids[easy], scores.ids[~easy], float(theta), easy, scores.ranking())
    assert len(np.intersect1d(part.easy_ids, part.hard_ids)) == 0
    assert part.n_easy + part.n_hard == len(scores.ids)
    return part
