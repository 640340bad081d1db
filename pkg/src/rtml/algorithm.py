"""Reverse-thinking meta-classification: training, routed prediction, model bundles.

Training produces three models from one training set: a suitable model fitted
on easy samples only, an inertial model fitted on everything, and a
discriminator that predicts whether a query is easy. Queries judged easy go
to the suitable model; the rest go to the inertial model, whose answer may be
flipped once by the confusion-matrix posteriors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, Normalizer, class_priors, normalize_apply, normalize_fit
from .model import (
    ClassifierSpec,
    TrainedModel,
    fit,
    has_proba,
    model_from_fields,
    model_to_fields,
)
from .reverse import (
    REVERSE_MODES,
    CvRecords,
    ReversePosteriors,
    confusion_from_records,
    cv_predictions,
    reverse_decide_batch,
    reverse_posteriors,
)
from .rng import derive_seed
from .simplicity import (
    SCORE_MODES,
    SimplicityScores,
    build_committee,
    correctness_matrix,
    partition_by_threshold,
    scores_from_correctness,
    Partition,
)

FORMAT_NAME = "rtml-model"
FORMAT_VERSION = 1
DEGENERATE_FLAGS = ("none", "all_easy", "all_hard")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending setting."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RtmlConfig:
    base_spec: ClassifierSpec = field(default_factory=ClassifierSpec)
    discrim_spec: ClassifierSpec = field(default_factory=lambda: ClassifierSpec(kind="svmknn", k_neighbors=5))
    theta: float = 0.5
    k_folds: int = 10
    n_models: int = 40
    reverse_mode: str = "model_prob"
    alpha: float = 1.0
    seed: int = 42
    normalize: bool = True
    cm_on_hard_only: bool = False
    score_mode: str = "all"

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta", f"must lie in [0, 1], got {self.theta}")
        if self.k_folds < 2:
            raise ConfigError("k_folds", f"must be >= 2, got {self.k_folds}")
        if self.n_models < 1:
            raise ConfigError("n_models", f"must be >= 1, got {self.n_models}")
        if self.reverse_mode not in REVERSE_MODES:
            raise ConfigError("reverse_mode", f"must be one of {', '.join(REVERSE_MODES)}, got {self.reverse_mode!r}")
        if self.reverse_mode == "model_prob" and not has_proba(self.base_spec.kind):
            raise ConfigError("reverse_mode", f"model_prob needs a probabilistic base classifier, not {self.base_spec.kind}")
        if not self.alpha >= 0.0:
            raise ConfigError("alpha", f"must be >= 0, got {self.alpha}")
        if self.score_mode not in SCORE_MODES:
            raise ConfigError("score_mode", f"must be one of {', '.join(SCORE_MODES)}")

    def replace(self, **changes) -> "RtmlConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class RtmlModel:
    suitable: TrainedModel
    inertial: TrainedModel
    discriminator: TrainedModel | None
    posteriors: ReversePosteriors
    priors: tuple[float, float]
    partition: Partition
    scores: SimplicityScores
    degenerate: str = "none"
    normalizer: Normalizer | None = None
    reverse_mode: str = "model_prob"
    class_names: tuple[str, str] = ("C1", "C2")

    @property
    def d(self) -> int:
        return self.inertial.d


@dataclass(frozen=True, eq=False)
class RoutedPrediction:
    """Batch prediction with its routing trace (one entry per query row)."""

    label: np.ndarray
    easy: np.ndarray  # True where the discriminator said "+"
    omega: np.ndarray  # pre-flip class from the routed model
    q: np.ndarray  # comparison probabilities, NaN on the easy path
    flipped: np.ndarray

    def trace(self, i: int) -> dict:
        easy = bool(self.easy[i])
        return {
            "path": "easy" if easy else "hard",
            "y": "+" if easy else "-",
            "omega": int(self.omega[i]),
            "q": None if easy else [float(self.q[i, 0]), float(self.q[i, 1])],
            "flipped": bool(self.flipped[i]),
            "label": int(self.label[i]),
        }


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Prepared:
    """Theta-independent training state, shared across threshold sweeps."""

    train: Dataset  # normalised when the config asks for it
    normalizer: Normalizer | None
    correct: np.ndarray  # committee correctness, n_models x n
    heldout: np.ndarray
    committee_seed: int
    inertial: TrainedModel
    records: CvRecords
    priors: tuple[float, float]
    cfg: RtmlConfig

    def scores(self, n_models: int | None = None) -> SimplicityScores:
        n = self.cfg.n_models if n_models is None else n_models
        held = self.heldout[:n] if self.cfg.score_mode == "out_of_fold" else None
        return scores_from_correctness(self.correct[:n], self.train.ids, self.committee_seed, held)


def _check_trainable(train: Dataset, cfg: RtmlConfig) -> None:
    if not train.has_both_classes():
        raise ValueError("RTML training needs both classes present")
    if train.n < 2 * cfg.k_folds:
        raise ValueError(f"need at least {2 * cfg.k_folds} samples for k_folds={cfg.k_folds}, got {train.n}")


def prepare(train: Dataset, cfg: RtmlConfig) -> Prepared:
    """Committee scores, inertial model, CV records and priors for ``train``."""
    _check_trainable(train, cfg)
    norm = normalize_fit(train) if cfg.normalize else None
    tr = normalize_apply(norm, train) if norm is not None else train
    cseed = derive_seed(cfg.seed, "committee")
    committee = build_committee(tr, cfg.base_spec, cfg.k_folds, cfg.n_models, cseed)
    correct = correctness_matrix(committee, tr)
    heldout = np.vstack(committee.heldout)
    inertial = fit(cfg.base_spec, tr)
    records = cv_predictions(tr, cfg.base_spec, cfg.k_folds, derive_seed(cfg.seed, "confusion"))
    return Prepared(tr, norm, correct, heldout, cseed, inertial, records, class_priors(tr), cfg)


def finish(prep: Prepared, theta: float | None = None, discrim_spec: ClassifierSpec | None = None,
           n_models: int | None = None) -> RtmlModel:
    """Partition at ``theta`` and fit the suitable model and the discriminator."""
    cfg = prep.cfg
    theta = cfg.theta if theta is None else theta
    discrim_spec = discrim_spec or cfg.discrim_spec
    tr = prep.train
    scores = prep.scores(n_models)
    part = partition_by_threshold(scores, theta)
    easy_set = tr.subset(np.flatnonzero(part.easy_mask))
    discriminator = None
    if part.n_hard == 0:
        degenerate = "all_easy"
        suitable = prep.inertial
    else:
        if part.n_easy == 0 or not easy_set.has_both_classes():
            degenerate = "all_hard"
            suitable = prep.inertial
        else:
            degenerate = "none"
            suitable = fit(cfg.base_spec, easy_set)
        discriminator = fit(discrim_spec, tr.with_labels(part.easy_mask.astype(np.int64), ("hard", "easy")))
    cm_mask = ~part.easy_mask if cfg.cm_on_hard_only else None
    cm = confusion_from_records(prep.records, cm_mask)
    posteriors = reverse_posteriors(cm, cfg.alpha)
    return RtmlModel(
        suitable=suitable,
        inertial=prep.inertial,
        discriminator=discriminator,
        posteriors=posteriors,
        priors=prep.priors,
        partition=part,
        scores=scores,
        degenerate=degenerate,
        normalizer=prep.normalizer,
        reverse_mode=cfg.reverse_mode,
        class_names=tr.class_names,
    )


def rtml_train(train: Dataset, cfg: RtmlConfig) -> RtmlModel:
    return finish(prepare(train, cfg))


# --------------------------------------------------------------------------
# prediction
# --------------------------------------------------------------------------


def route(model: RtmlModel, x: np.ndarray) -> np.ndarray:
    """Boolean easy-path mask for already-normalised queries."""
    if model.discriminator is None:
        return np.ones(x.shape[0], dtype=bool)
    return model.discriminator.predict(x) == 1


def finish_routed(model: RtmlModel, x: np.ndarray, easy: np.ndarray) -> RoutedPrediction:
    """Resolve both paths given a precomputed routing mask (queries already normalised)."""
    n = x.shape[0]
    omega = np.zeros(n, dtype=np.int64)
    label = np.zeros(n, dtype=np.int64)
    q = np.full((n, 2), np.nan)
    flipped = np.zeros(n, dtype=bool)
    if easy.any():
        omega[easy] = model.suitable.predict(x[easy])
        label[easy] = omega[easy]
    hard = ~easy
    if hard.any():
        xh = x[hard]
        w = model.inertial.predict(xh)
        if model.reverse_mode == "model_prob":
            qh = model.inertial.predict_proba(xh)
        else:
            qh = np.tile(np.asarray(model.priors, dtype=np.float64), (len(w), 1))
        out = reverse_decide_batch(w, qh, model.posteriors)
        omega[hard] = w
        label[hard] = out
        q[hard] = qh
        flipped[hard] = out != w
    return RoutedPrediction(label, easy, omega, q, flipped)


def _prepare_queries(model: RtmlModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != model.d:
        from .model import DimensionError

        raise DimensionError(f"expected {model.d} features, got shape {x.shape}")
    return model.normalizer.apply(x) if model.normalizer is not None else x


def rtml_predict_batch(model: RtmlModel, x) -> RoutedPrediction:
    xn = _prepare_queries(model, x)
    return finish_routed(model, xn, route(model, xn))


def rtml_predict(model: RtmlModel, x) -> tuple[int, dict]:
    """Single query: (class, trace)."""
    out = rtml_predict_batch(model, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return int(out.label[0]), out.trace(0)


# --------------------------------------------------------------------------
# bundle format
# --------------------------------------------------------------------------


def _f(v: float) -> str:
    return format(float(v), ".17g")


def _fl(a) -> str:
    return ",".join(_f(v) for v in np.ravel(a))


def _il(a) -> str:
    return ",".join(str(int(v)) for v in np.ravel(a))


def rtml_save(model: RtmlModel) -> str:
    """Versioned key=value text; floats carry 17 significant digits."""
    s = model.scores
    meta = [
        ("degenerate", model.degenerate),
        ("reverse_mode", model.reverse_mode),
        ("class_names", json.dumps(list(model.class_names))),
        ("theta", _f(model.partition.theta)),
        ("alpha", _f(model.posteriors.alpha)),
        ("posteriors", _fl(model.posteriors.post)),
        ("priors", _fl(model.priors)),
        ("n_models", str(s.n_models)),
        ("committee_seed", str(s.committee_seed)),
        ("ids", _il(s.ids)),
        ("scores", _fl(s.scores)),
        ("correct", _il(s.correct)),
    ]
    lines = [FORMAT_NAME, f"version={FORMAT_VERSION}", "[meta]"]
    lines += [f"{k}={v}" for k, v in meta]
    if model.normalizer is not None:
        lines += ["[normalizer]", f"means={_fl(model.normalizer.means)}", f"stddevs={_fl(model.normalizer.stddevs)}"]
    for name, m in (("suitable", model.suitable), ("inertial", model.inertial), ("discriminator", model.discriminator)):
        if m is None:
            continue
        lines.append(f"[{name}]")
        lines += [f"{k}={v}" for k, v in model_to_fields(m)]
    lines.append("[end]")
    return "\n".join(lines) + "\n"


def _sections(text: str) -> dict[str, dict[str, str]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_NAME:
        raise ModelFormatError(f"not an {FORMAT_NAME} file")
    if len(lines) < 2 or not lines[1].startswith("version="):
        raise ModelFormatError("missing field 'version'")
    version = lines[1].partition("=")[2].strip()
    if version != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported version {version!r} (expected {FORMAT_VERSION})")
    out: dict[str, dict[str, str]] = {}
    current = None
    last_field = None
    ended = False
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        if line.startswith("[") and line.rstrip().endswith("]"):
            current = line.strip()[1:-1]
            if current == "end":
                ended = True
                break
            out[current] = {}
            continue
        if current is None or "=" not in line:
            raise ModelFormatError(f"malformed line {lineno}: {line[:40]!r}")
        k, _, v = line.partition("=")
        out[current][k.strip()] = v.strip()
        last_field = f"{current}.{k.strip()}"
    if not ended:
        where = f" after field '{last_field}'" if last_field else ""
        raise ModelFormatError(f"truncated file: missing [end] marker{where}")
    return out


def rtml_load(text: str) -> RtmlModel:
    secs = _sections(text)

    def section(name: str) -> dict[str, str]:
        if name not in secs:
            raise ModelFormatError(f"missing section [{name}]")
        return secs[name]

    meta = section("meta")

    def get(key: str) -> str:
        if key not in meta:
            raise ModelFormatError(f"missing field 'meta.{key}'")
        return meta[key]

    def floats(key: str, size: int | None = None) -> np.ndarray:
        try:
            a = np.array([float(v) for v in get(key).split(",")]) if get(key) else np.zeros(0)
        except ValueError:
            raise ModelFormatError(f"malformed field 'meta.{key}'") from None
        if size is not None and a.size != size:
            raise ModelFormatError(f"malformed field 'meta.{key}'")
        return a

    def ints(key: str) -> np.ndarray:
        try:
            return np.array([int(v) for v in get(key).split(",")], dtype=np.int64) if get(key) else np.zeros(0, np.int64)
        except ValueError:
            raise ModelFormatError(f"malformed field 'meta.{key}'") from None

    def sub(name: str) -> TrainedModel:
        try:
            return model_from_fields(section(name))
        except (KeyError, ValueError) as exc:
            raise ModelFormatError(f"[{name}] {exc}") from None

    degenerate = get("degenerate")
    if degenerate not in DEGENERATE_FLAGS:
        raise ModelFormatError("malformed field 'meta.degenerate'")
    reverse_mode = get("reverse_mode")
    if reverse_mode not in REVERSE_MODES:
        raise ModelFormatError("malformed field 'meta.reverse_mode'")
    try:
        names = tuple(json.loads(get("class_names")))
        n_models = int(get("n_models"))
        committee_seed = int(get("committee_seed"))
    except ValueError as exc:
        raise ModelFormatError(f"malformed meta field: {exc}") from None
    ids = ints("ids")
    scores = SimplicityScores(floats("scores", len(ids)), ids, n_models, committee_seed, ints("correct"))
    theta = float(floats("theta", 1)[0])
    post = floats("posteriors", 4).reshape(2, 2)
    post.setflags(write=False)
    p0, p1 = floats("priors", 2)
    norm = None
    if "normalizer" in secs:
        nd = secs["normalizer"]
        try:
            means = np.array([float(v) for v in nd["means"].split(",")])
            stds = np.array([float(v) for v in nd["stddevs"].split(",")])
        except KeyError as exc:
            raise ModelFormatError(f"missing field 'normalizer.{exc.args[0]}'") from None
        except ValueError:
            raise ModelFormatError("malformed field in [normalizer]") from None
        norm = Normalizer(means, stds)
    return RtmlModel(
        suitable=sub("suitable"),
        inertial=sub("inertial"),
        discriminator=sub("discriminator") if degenerate != "all_easy" else None,
        posteriors=ReversePosteriors(post, float(floats("alpha", 1)[0])),
        priors=(float(p0), float(p1)),
        partition=partition_by_threshold(scores, theta),
        scores=scores,
        degenerate=degenerate,
        normalizer=norm,
        reverse_mode=reverse_mode,
        class_names=(str(names[0]), str(names[1])),
    )
