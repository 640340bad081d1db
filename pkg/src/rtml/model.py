"""Binary classifiers: softmax regression, kNN, linear SVM and SVM-KNN.

All models work on 2-D feature matrices. Ties always resolve to class 0 and
neighbour distance ties to the lower sample id, so every run is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .data import Dataset

KINDS = ("softmax", "knn", "linsvm", "svmknn")


class TrainError(RuntimeError):
    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {detail}" if detail else kind)


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    """Declarative learner description.

    Only the hyperparameters relevant to ``kind`` are validated and used.
    ``svm_epochs`` is the iteration budget of the linear SVM, including the
    local SVMs fitted by SVM-KNN.
    """

    kind: str = "softmax"
    learning_rate: float = 0.1
    epochs: int = 500
    l2_penalty: float = 1e-4
    k_neighbors: int = 5
    svm_c: float = 10.0
    svm_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind == "softmax":
            if not self.learning_rate > 0:
                raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
            if self.epochs < 1:
                raise ValueError(f"epochs must be >= 1, got {self.epochs}")
            if not self.l2_penalty >= 0:
                raise ValueError(f"l2_penalty must be >= 0, got {self.l2_penalty}")
        if self.kind in ("knn", "svmknn"):
            if self.k_neighbors < 1 or self.k_neighbors % 2 == 0:
                raise ValueError(f"k_neighbors must be an odd count >= 1, got {self.k_neighbors}")
        if self.kind in ("linsvm", "svmknn"):
            if not self.svm_c > 0:
                raise ValueError(f"svm_c must be > 0, got {self.svm_c}")
            if self.svm_epochs < 1:
                raise ValueError(f"svm_epochs must be >= 1, got {self.svm_epochs}")

    def replace(self, **changes) -> "ClassifierSpec":
        return replace(self, **changes)


def _as_matrix(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != d:
        raise DimensionError(f"expected {d} features, got shape {x.shape}")
    return x


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def argmax_binary(probs) -> int:
    """Class with the larger probability; exact ties go to class 0."""
    p = np.asarray(probs, dtype=np.float64)
    return int(p[1] > p[0])


# --------------------------------------------------------------------------
# softmax regression
# --------------------------------------------------------------------------


def softmax_probs(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_loss_grad(weights: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` (bias column unpenalised) and its gradient."""
    xb = _augment(x)
    p = softmax_probs(xb @ weights.T)
    n = x.shape[0]
    rows = np.arange(n)
    loss = -np.mean(np.log(np.clip(p[rows, y], 1e-300, None)))
    w = weights.copy()
    w[:, -1] = 0.0
    loss += 0.5 * l2 * float(np.sum(w * w))
    p[rows, y] -= 1.0
    grad = p.T @ xb / n + l2 * w
    return float(loss), grad


@dataclass(frozen=True, eq=False)
class SoftmaxModel:
    weights: np.ndarray  # 2 x (d+1), bias last
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kind: str = "softmax"

    @property
    def d(self) -> int:
        return self.weights.shape[1] - 1

    def scores(self, x) -> np.ndarray:
        x = _as_matrix(x, self.d)
        return x @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict_proba(self, x) -> np.ndarray:
        return softmax_probs(self.scores(x))

    def predict(self, x) -> np.ndarray:
        s = self.scores(x)
        return (s[:, 1] > s[:, 0]).astype(np.int64)


@numba.njit(cache=True)
def _binary_softmax_gd(xb, y, epochs, lr, l2):
    # With two classes and zero init the weight rows stay exact negatives, so
    # descent on W is descent on v = w1 - w0 with W = [-v/2, v/2].
    n, p = xb.shape
    v = np.zeros(p)
    g = np.empty(p)
    trace = np.empty(epochs)
    for e in range(epochs):
        g[:] = 0.0
        loss = 0.0
        for i in range(n):
            s = 0.0
            for j in range(p):
                s += xb[i, j] * v[j]
            ez = np.exp(-abs(s))
            p1 = 1.0 / (1.0 + ez) if s >= 0.0 else ez / (1.0 + ez)
            m = s if y[i] == 1 else -s
            loss += np.log1p(ez) + (-m if m < 0.0 else 0.0)
            r = p1 - y[i]
            for j in range(p):
                g[j] += r * xb[i, j]
        reg = 0.0
        for j in range(p - 1):
            reg += v[j] * v[j]
        trace[e] = loss / n + 0.25 * l2 * reg
        for j in range(p - 1):
            v[j] -= lr * (2.0 * g[j] / n + l2 * v[j])
        v[p - 1] -= lr * 2.0 * g[p - 1] / n
    return v, trace


def fit_softmax(spec: ClassifierSpec, train: Dataset) -> SoftmaxModel:
    """Full-batch gradient descent on regularised cross-entropy from zero weights."""
    xb = _augment(train.features)
    v, trace = _binary_softmax_gd(xb, train.labels, spec.epochs, spec.learning_rate, spec.l2_penalty)
    if not (np.isfinite(trace).all() and np.isfinite(v).all()):
        raise TrainError("Diverged", "non-finite loss during gradient descent")
    w = np.vstack([-0.5 * v, 0.5 * v])
    trace.setflags(write=False)
    w.setflags(write=False)
    return SoftmaxModel(w, trace)


# --------------------------------------------------------------------------
# linear SVM
# --------------------------------------------------------------------------


def hinge_loss_grad(w: np.ndarray, x: np.ndarray, y_pm: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
    """L2-regularised mean hinge loss on +-1 labels and a subgradient (bias folded into w)."""
    xb = _augment(x)
    margin = y_pm * (xb @ w)
    active = margin < 1.0
    loss = 0.5 * lam * float(w @ w) + float(np.mean(np.maximum(0.0, 1.0 - margin)))
    grad = lam * w - (y_pm[active, None] * xb[active]).sum(axis=0) / len(y_pm)
    return loss, grad


@dataclass(frozen=True, eq=False)
class LinsvmModel:
    weights: np.ndarray  # d+1, bias last
    kind: str = "linsvm"

    @property
    def d(self) -> int:
        return len(self.weights) - 1

    def decision(self, x) -> np.ndarray:
        x = _as_matrix(x, self.d)
        return x @ self.weights[:-1] + self.weights[-1]

    def predict(self, x) -> np.ndarray:
        return (self.decision(x) > 0).astype(np.int64)


@numba.njit(cache=True)
def _pegasos(xb, y_pm, lam, iters):
    # full-batch subgradient descent, step 1/(lam*t), bias folded into w;
    # returns the mean of the second-half iterates
    n, p = xb.shape
    w = np.zeros(p)
    avg = np.zeros(p)
    g = np.empty(p)
    start = iters // 2
    for t in range(1, iters + 1):
        g[:] = 0.0
        for i in range(n):
            m = 0.0
            for j in range(p):
                m += xb[i, j] * w[j]
            if y_pm[i] * m < 1.0:
                for j in range(p):
                    g[j] += y_pm[i] * xb[i, j]
        eta = 1.0 / (lam * t)
        for j in range(p):
            w[j] = w[j] * (1.0 - eta * lam) + eta * g[j] / n
        if t > start:
            for j in range(p):
                avg[j] += w[j]
    return avg / (iters - start)


def fit_linsvm(spec: ClassifierSpec, train: Dataset) -> LinsvmModel:
    x = train.features
    y_pm = np.where(train.labels == 1, 1.0, -1.0)
    lam = 1.0 / (spec.svm_c * train.n)
    w = _pegasos(_augment(x), y_pm, lam, spec.svm_epochs)
    if not np.isfinite(w).all():
        raise TrainError("Diverged", "non-finite SVM weights")
    w.setflags(write=False)
    return LinsvmModel(w)


# --------------------------------------------------------------------------
# nearest neighbours
# --------------------------------------------------------------------------


def nearest_neighbors(train_x: np.ndarray, train_ids: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """Row positions of the k nearest training points per query (Euclidean).

    Distance ties go to the lower sample id.
    """
    order = np.argsort(train_ids, kind="stable")
    tx = train_x[order]
    out = np.empty((query.shape[0], k), dtype=np.int64)
    chunk = max(1, 4_000_000 // max(1, tx.shape[0] * tx.shape[1]))
    for lo in range(0, query.shape[0], chunk):
        q = query[lo:lo + chunk]
        dist = ((q[:, None, :] - tx[None, :, :]) ** 2).sum(axis=2)
        out[lo:lo + chunk] = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return order[out]


@dataclass(frozen=True, eq=False)
class KnnModel:
    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    k_neighbors: int
    kind: str = "knn"

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def neighbors(self, x) -> np.ndarray:
        return nearest_neighbors(self.features, self.ids, _as_matrix(x, self.d), self.k_neighbors)

    def predict_proba(self, x) -> np.ndarray:
        p1 = self.labels[self.neighbors(x)].mean(axis=1)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, x) -> np.ndarray:
        votes = self.labels[self.neighbors(x)].sum(axis=1)
        return (2 * votes > self.k_neighbors).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SvmknnModel:
    """kNN that defers to a local linear SVM when the neighbours disagree."""

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    k_neighbors: int
    svm_c: float = 10.0
    svm_epochs: int = 100
    kind: str = "svmknn"

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def predict(self, x) -> np.ndarray:
        x = _as_matrix(x, self.d)
        nb = nearest_neighbors(self.features, self.ids, x, self.k_neighbors)
        return self.predict_from_neighbors(x, nb)

    def predict_from_neighbors(self, x: np.ndarray, nb: np.ndarray) -> np.ndarray:
        labs = self.labels[nb]
        votes = labs.sum(axis=1)
        k = nb.shape[1]
        out = (votes == k).astype(np.int64)
        cache: dict[bytes, np.ndarray] = {}
        for i in np.flatnonzero((votes > 0) & (votes < k)):
            key = np.sort(nb[i]).tobytes()
            w = cache.get(key)
            if w is None:
                w = local_svm_weights(self.features[nb[i]], labs[i], self.svm_c, self.svm_epochs)
                cache[key] = w
            out[i] = int(x[i] @ w[:-1] + w[-1] > 0)
        return out


def local_svm_weights(x: np.ndarray, labels: np.ndarray, svm_c: float, iters: int) -> np.ndarray:
    y_pm = np.where(labels == 1, 1.0, -1.0)
    return _pegasos(_augment(x), y_pm, 1.0 / (svm_c * len(labels)), iters)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

TrainedModel = SoftmaxModel | KnnModel | LinsvmModel | SvmknnModel


def fit(spec: ClassifierSpec, train: Dataset) -> TrainedModel:
    if train.n == 0:
        raise TrainError("EmptyTrain", "training set is empty")
    if spec.kind in ("softmax", "linsvm") and not train.has_both_classes():
        raise TrainError("SingleClass", f"{spec.kind} needs both classes in the training set")
    if spec.kind == "softmax":
        return fit_softmax(spec, train)
    if spec.kind == "linsvm":
        return fit_linsvm(spec, train)
    if spec.k_neighbors > train.n:
        raise TrainError("TooFewSamples", f"k_neighbors={spec.k_neighbors} exceeds {train.n} training samples")
    if spec.kind == "knn":
        return KnnModel(train.features, train.labels, train.ids, spec.k_neighbors)
    return SvmknnModel(train.features, train.labels, train.ids, spec.k_neighbors, spec.svm_c, spec.svm_epochs)


def predict(model: TrainedModel, x) -> np.ndarray:
    return model.predict(x)


def predict_one(model: TrainedModel, x) -> int:
    return int(model.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def predict_proba(model: TrainedModel, x) -> np.ndarray:
    if not hasattr(model, "predict_proba"):
        raise TypeError(f"{model.kind} models do not produce class probabilities")
    return model.predict_proba(x)


def has_proba(kind: str) -> bool:
    return kind in ("softmax", "knn")


# --------------------------------------------------------------------------
# text serialisation
# --------------------------------------------------------------------------


def _floats(a) -> str:
    return ",".join(format(float(v), ".17g") for v in np.ravel(a))


def _ints(a) -> str:
    return ",".join(str(int(v)) for v in np.ravel(a))


def _parse_floats(s: str) -> np.ndarray:
    return np.array([float(v) for v in s.split(",")]) if s else np.zeros(0)


def _parse_ints(s: str) -> np.ndarray:
    return np.array([int(v) for v in s.split(",")], dtype=np.int64) if s else np.zeros(0, dtype=np.int64)


def model_to_fields(model: TrainedModel) -> list[tuple[str, str]]:
    """Ordered key/value pairs describing a fitted model."""
    f = [("kind", model.kind), ("d", str(model.d))]
    if isinstance(model, SoftmaxModel):
        f.append(("weights", _floats(model.weights)))
    elif isinstance(model, LinsvmModel):
        f.append(("weights", _floats(model.weights)))
    else:
        f += [
            ("k_neighbors", str(model.k_neighbors)),
            ("n", str(len(model.labels))),
            ("features", _floats(model.features)),
            ("labels", _ints(model.labels)),
            ("ids", _ints(model.ids)),
        ]
        if isinstance(model, SvmknnModel):
            f += [("svm_c", format(model.svm_c, ".17g")), ("svm_epochs", str(model.svm_epochs))]
    return f


def model_from_fields(fields: dict[str, str]) -> TrainedModel:
    """Inverse of :func:`model_to_fields`; raises KeyError/ValueError naming the field."""

    def get(key: str) -> str:
        if key not in fields:
            raise KeyError(f"missing field {key!r}")
        return fields[key]

    def num(key: str, conv):
        try:
            return conv(get(key))
        except ValueError:
            raise ValueError(f"malformed field {key!r}") from None

    kind = get("kind")
    d = num("d", int)
    if kind == "softmax":
        w = num("weights", _parse_floats)
        if w.size != 2 * (d + 1):
            raise ValueError("malformed field 'weights'")
        w = w.reshape(2, d + 1)
        w.setflags(write=False)
        return SoftmaxModel(w)
    if kind == "linsvm":
        w = num("weights", _parse_floats)
        if w.size != d + 1:
            raise ValueError("malformed field 'weights'")
        w.setflags(write=False)
        return LinsvmModel(w)
    if kind in ("knn", "svmknn"):
        n = num("n", int)
        x = num("features", _parse_floats)
        y = num("labels", _parse_ints)
        ids = num("ids", _parse_ints)
        if x.size != n * d:
            raise ValueError("malformed field 'features'")
        if y.size != n:
            raise ValueError("malformed field 'labels'")
        if ids.size != n:
            raise ValueError("malformed field 'ids'")
        x = x.reshape(n, d)
        for a in (x, y, ids):
            a.setflags(write=False)
        k = num("k_neighbors", int)
        if kind == "knn":
            return KnnModel(x, y, ids, k)
        return SvmknnModel(x, y, ids, k, num("svm_c", float), num("svm_epochs", int))
    raise ValueError(f"malformed field 'kind': {kind!r}")
