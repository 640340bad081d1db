import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import blobs
from rtml.data import Dataset, generate_two_spirals, stratified_kfold
from rtml.model import (
    ClassifierSpec,
    DimensionError,
    KnnModel,
    LinsvmModel,
    SoftmaxModel,
    SvmknnModel,
    TrainError,
    argmax_binary,
    fit,
    has_proba,
    hinge_loss_grad,
    model_from_fields,
    model_to_fields,
    nearest_neighbors,
    predict_proba,
    softmax_loss_grad,
)
from rtml.rng import make_rng

XOR_X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
XOR_Y = np.array([0, 0, 1, 1])


def cv_accuracy(ds, spec, k=10, seed=0):
    plan = stratified_kfold(ds.labels, k, seed)
    correct = 0
    for tr, te in plan.splits():
        correct += int((fit(spec, ds.subset(tr)).predict(ds.features[te]) == ds.labels[te]).sum())
    return correct / ds.n


# ---- spec validation ---------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="tree"),
        dict(learning_rate=0.0),
        dict(epochs=0),
        dict(l2_penalty=-1.0),
        dict(kind="knn", k_neighbors=4),
        dict(kind="svmknn", k_neighbors=0),
        dict(kind="linsvm", svm_c=0.0),
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ClassifierSpec(**kwargs)


def test_irrelevant_hyperparameters_ignored():
    ClassifierSpec(kind="knn", learning_rate=-1.0)
    ClassifierSpec(kind="softmax", k_neighbors=4)


# ---- softmax ---------------------------------------------------------------------


def test_softmax_separable_1d():
    ds = Dataset(np.array([[0.0], [1.0]] * 20), [0, 1] * 20)
    m = fit(ClassifierSpec(), ds)
    assert np.mean(m.predict(ds.features) == ds.labels) == 1.0


def test_softmax_xor_bounded_by_three_quarters():
    ds = Dataset(np.tile(XOR_X, (25, 1)), np.tile(XOR_Y, 25))
    m = fit(ClassifierSpec(), ds)
    assert np.mean(m.predict(ds.features) == ds.labels) <= 0.75


def test_xor_linear_oracle():
    # exhaustive weight grid: no linear rule labels more than 3 of the 4 XOR points
    grid = np.linspace(-2, 2, 17)
    best = 0
    for a, b, c in itertools.product(grid, grid, grid):
        pred = (XOR_X @ np.array([a, b]) + c > 0).astype(int)
        best = max(best, int((pred == XOR_Y).sum()))
    assert best == 3


def test_softmax_proba_closed_forms():
    zero = SoftmaxModel(np.zeros((2, 3)))
    np.testing.assert_allclose(zero.predict_proba(np.array([[1.0, -2.0]])), [[0.5, 0.5]])
    w = np.array([[0.0, 0.0], [0.0, np.log(3.0)]])  # d=1, scores (0, ln 3) for any x
    np.testing.assert_allclose(SoftmaxModel(w).predict_proba(np.array([[5.0]])), [[0.25, 0.75]], atol=1e-15)


def test_argmax_tie_break():
    assert argmax_binary((0.3, 0.7)) == 1
    assert argmax_binary((0.5, 0.5)) == 0
    assert SoftmaxModel(np.zeros((2, 2))).predict(np.array([[3.0]]))[0] == 0
    assert LinsvmModel(np.zeros(2)).predict(np.array([[3.0]]))[0] == 0


def numeric_gradient(f, w, h=1e-6):
    g = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        g[idx] = (f(wp) - f(wm)) / (2 * h)
    return g


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def test_softmax_gradient_finite_differences():
    rng = make_rng(11, "gradcheck")
    for _ in range(100):
        n, d = int(rng.integers(1, 20)), int(rng.integers(1, 6))
        w = rng.normal(size=(2, d + 1))
        x = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n)
        l2 = float(rng.uniform(0, 0.1))
        _, g = softmax_loss_grad(w, x, y, l2)
        num = numeric_gradient(lambda v: softmax_loss_grad(v, x, y, l2)[0], w)
        assert rel_error(g, num) < 1e-5


def test_hinge_gradient_finite_differences():
    rng = make_rng(12, "gradcheck")
    checked = 0
    while checked < 100:
        n, d = int(rng.integers(1, 20)), int(rng.integers(1, 6))
        w = rng.normal(size=d + 1)
        x = rng.normal(size=(n, d))
        y = np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)
        margin = y * (np.column_stack([x, np.ones(n)]) @ w)
        if np.any(np.abs(margin - 1.0) <= 1e-3):
            continue
        lam = float(rng.uniform(0, 0.1))
        _, g = hinge_loss_grad(w, x, y, lam)
        num = numeric_gradient(lambda v: hinge_loss_grad(v, x, y, lam)[0], w)
        assert rel_error(g, num) < 1e-5
        checked += 1


def test_softmax_matches_two_row_gradient_descent():
    ds = blobs(60, d=3, sep=1.0, seed=4)
    spec = ClassifierSpec(epochs=50, learning_rate=0.3, l2_penalty=1e-2)
    w = np.zeros((2, 4))
    for _ in range(spec.epochs):
        _, g = softmax_loss_grad(w, ds.features, ds.labels, spec.l2_penalty)
        w -= spec.learning_rate * g
    np.testing.assert_allclose(fit(spec, ds).weights, w, atol=1e-12)


def test_softmax_loss_trace_decreases():
    m = fit(ClassifierSpec(), blobs(80, seed=1))
    assert len(m.loss_trace) == 500
    assert m.loss_trace[-1] <= m.loss_trace[0]


def test_softmax_shift_invariance():
    m = fit(ClassifierSpec(), blobs(50, seed=2))
    shifted = SoftmaxModel(m.weights + np.array([0.7, -1.3, 2.0]))
    x = make_rng(3).normal(size=(200, 2)) * 3
    np.testing.assert_array_equal(m.predict(x), shifted.predict(x))


def test_single_class_and_empty_errors():
    one = Dataset(np.zeros((5, 2)), [1] * 5)
    for kind in ("softmax", "linsvm"):
        with pytest.raises(TrainError) as err:
            fit(ClassifierSpec(kind=kind), one)
        assert err.value.kind == "SingleClass"
    with pytest.raises(TrainError):
        fit(ClassifierSpec(kind="knn"), Dataset(np.zeros((0, 2)), []))


def test_diverged():
    ds = Dataset(np.array([[1e200], [-1e200]]), [0, 1])
    with pytest.raises(TrainError) as err:
        fit(ClassifierSpec(learning_rate=1e10), ds)
    assert err.value.kind == "Diverged"


@given(st.integers(0, 1000), st.sampled_from(["softmax", "knn"]))
def test_probabilities_normalised(seed, kind):
    ds = blobs(30, seed=seed % 7)
    m = fit(ClassifierSpec(kind=kind, k_neighbors=3), ds)
    p = m.predict_proba(make_rng(seed).normal(size=(20, 2)) * 5)
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all((p >= 0) & (p <= 1))


def test_dimension_mismatch():
    m = fit(ClassifierSpec(), blobs(20))
    with pytest.raises(DimensionError):
        m.predict(np.zeros((1, 3)))
    with pytest.raises(TypeError):
        predict_proba(fit(ClassifierSpec(kind="linsvm"), blobs(20)), np.zeros((1, 2)))
    assert has_proba("softmax") and has_proba("knn") and not has_proba("svmknn")


@pytest.mark.parametrize("kind", ["softmax", "knn", "linsvm", "svmknn"])
def test_fit_deterministic(kind):
    ds = blobs(40, seed=5, sep=1.0)
    spec = ClassifierSpec(kind=kind, k_neighbors=3)
    a, b = fit(spec, ds), fit(spec, ds)
    assert model_to_fields(a) == model_to_fields(b)
    x = make_rng(1).normal(size=(50, 2))
    np.testing.assert_array_equal(a.predict(x), b.predict(x))


# ---- linear SVM -----------------------------------------------------------------


def test_linsvm_separable():
    ds = blobs(80, sep=6.0, seed=3)
    m = fit(ClassifierSpec(kind="linsvm"), ds)
    assert np.mean(m.predict(ds.features) == ds.labels) == 1.0
    assert np.all(np.isfinite(m.decision(ds.features)))


# ---- kNN and SVM-KNN -------------------------------------------------------------


def test_knn_self_prediction():
    ds = blobs(40, sep=0.5, seed=9)
    m = fit(ClassifierSpec(kind="knn", k_neighbors=1), ds)
    np.testing.assert_array_equal(m.predict(ds.features), ds.labels)
    np.testing.assert_array_equal(m.features, ds.features)


def test_neighbor_ties_go_to_lower_id():
    x = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    ids = np.array([7, 3, 1, 5])
    nb = nearest_neighbors(x, ids, np.array([[0.0]]), 4)
    np.testing.assert_array_equal(ids[nb[0]], [1, 3, 5, 7])


def test_knn_k_larger_than_train():
    with pytest.raises(TrainError):
        fit(ClassifierSpec(kind="knn", k_neighbors=5), blobs(4))


def test_svmknn_unanimous_branch(monkeypatch):
    import rtml.model as model

    ds = Dataset(np.array([[0.0], [0.1], [0.2], [5.0], [5.1]]), [1, 1, 1, 0, 0])
    m = fit(ClassifierSpec(kind="svmknn", k_neighbors=3), ds)

    def boom(*a, **k):
        raise AssertionError("SVM should not be fitted")

    monkeypatch.setattr(model, "local_svm_weights", boom)
    assert m.predict(np.array([[0.05]]))[0] == 1


def test_svmknn_mixed_neighbourhood_uses_local_svm():
    ds = Dataset(np.array([[0.0], [1.0], [2.0], [3.0]]), [0, 0, 1, 1])
    m = fit(ClassifierSpec(kind="svmknn", k_neighbors=3), ds)
    np.testing.assert_array_equal(m.predict(np.array([[0.2], [2.8]])), [0, 1])


@given(st.integers(0, 500))
def test_svmknn_k1_is_1nn(seed):
    ds = blobs(30, sep=1.0, seed=seed % 5)
    a = fit(ClassifierSpec(kind="svmknn", k_neighbors=1), ds)
    b = fit(ClassifierSpec(kind="knn", k_neighbors=1), ds)
    q = make_rng(seed).normal(size=(40, 2)) * 2
    np.testing.assert_array_equal(a.predict(q), b.predict(q))


def test_spirals_not_linearly_separable():
    ds = generate_two_spirals(200, 0.0, 7)
    assert cv_accuracy(ds, ClassifierSpec()) < 0.75


def test_svmknn_beats_softmax_on_spirals():
    ds = generate_two_spirals(200, 0.0, 7)
    assert cv_accuracy(ds, ClassifierSpec(kind="svmknn", k_neighbors=9)) > cv_accuracy(ds, ClassifierSpec())


# ---- serialisation ---------------------------------------------------------------


@pytest.mark.parametrize("kind", ["softmax", "knn", "linsvm", "svmknn"])
def test_model_fields_round_trip(kind):
    ds = blobs(30, seed=8, sep=1.0)
    m = fit(ClassifierSpec(kind=kind, k_neighbors=3), ds)
    fields = model_to_fields(m)
    back = model_from_fields(dict(fields))
    assert model_to_fields(back) == fields
    q = make_rng(2).normal(size=(100, 2)) * 3
    np.testing.assert_array_equal(back.predict(q), m.predict(q))


def test_model_fields_errors():
    fields = dict(model_to_fields(fit(ClassifierSpec(), blobs(20))))
    bad = dict(fields)
    del bad["weights"]
    with pytest.raises(KeyError, match="weights"):
        model_from_fields(bad)
    bad = dict(fields, weights="1,2,x")
    with pytest.raises(ValueError, match="weights"):
        model_from_fields(bad)


def test_model_types_exported():
    assert {KnnModel, LinsvmModel, SvmknnModel, SoftmaxModel}
