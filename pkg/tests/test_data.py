import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import find_dataset
from rtml.data import (
    Dataset,
    DataError,
    ParseError,
    class_priors,
    generate_two_spirals,
    load_dataset,
    normalize_apply,
    normalize_fit,
    parse_delimited,
    parse_libsvm,
    sniff_format,
    stratified_kfold,
    to_libsvm,
)
from rtml.rng import derive_seed, make_rng


# ---- libsvm ---------------------------------------------------------------


def test_libsvm_minimal():
    ds = parse_libsvm("1 1:0.5 2:-1.0\n-1 2:3.0")
    assert (ds.n, ds.d) == (2, 2)
    np.testing.assert_array_equal(ds.features, [[0.5, -1.0], [0.0, 3.0]])
    np.testing.assert_array_equal(ds.labels, [1, 0])
    np.testing.assert_array_equal(ds.ids, [0, 1])


def test_libsvm_golden_files(golden):
    ds = load_dataset(golden / "minimal.libsvm")
    np.testing.assert_array_equal(ds.features, [[0.5, -1.0], [0.0, 3.0]])
    ds = load_dataset(golden / "sparse.libsvm")
    np.testing.assert_array_equal(ds.features, [[1.0, 0.0, 2.5], [0.0, -0.4, 0.0], [0.25, 1000.0, -7.0]])
    np.testing.assert_array_equal(ds.labels, [1, 0, 1])


@pytest.mark.parametrize(
    "text, kind, line",
    [
        ("", "EmptyInput", None),
        ("\n\n# only comments\n", "EmptyInput", None),
        ("1 1:0.5\n-1 2:x", "MalformedToken", 2),
        ("1 1:0.5\n-1 2", "MalformedToken", 2),
        ("abc 1:1", "MalformedToken", 1),
        ("1 a:1", "MalformedToken", 1),
        ("1 0:1", "MalformedToken", 1),
        ("1 2:1 1:3", "NonIncreasingIndex", 1),
        ("1 2:1 2:3", "NonIncreasingIndex", 1),
        ("1 1:nan", "NonFinite", 1),
        ("1 1:inf", "NonFinite", 1),
        ("1 1:1\n-1 1:2\n2 1:3", "TooManyLabels", 3),
    ],
)
def test_libsvm_errors(text, kind, line):
    with pytest.raises(ParseError) as err:
        parse_libsvm(text)
    assert err.value.kind == kind
    assert err.value.line == line
    if line is not None:
        assert f"line {line}" in str(err.value)


def test_libsvm_label_mapping():
    for pos, neg in (("+1", "-1"), ("1", "0"), ("2", "-3")):
        ds = parse_libsvm(f"{pos} 1:1\n{neg} 1:2\n")
        np.testing.assert_array_equal(ds.labels, [1, 0])


def test_libsvm_crlf():
    ds = parse_libsvm("1 1:0.5 2:-1.0\r\n-1 2:3.0\r\n")
    np.testing.assert_array_equal(ds.features, [[0.5, -1.0], [0.0, 3.0]])


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(
    st.integers(1, 12).flatmap(
        lambda n: st.tuples(
            st.lists(st.lists(finite, min_size=3, max_size=3), min_size=n, max_size=n),
            st.lists(st.integers(0, 1), min_size=n, max_size=n),
        )
    )
)
def test_libsvm_round_trip(data):
    x, y = data
    ds = Dataset(np.array(x), np.array(y), ("-1", "+1"))
    back = parse_libsvm(to_libsvm(ds))
    # trailing all-zero columns are invisible in sparse text, so compare on the stored width
    assert back.d <= ds.d
    np.testing.assert_array_equal(back.features, ds.features[:, : back.d])
    assert not ds.features[:, back.d:].any()
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_libsvm_round_trip_keeps_class_names():
    ds = Dataset(np.array([[1.0, 2.0], [0.5, -1.0]]), [0, 1], ("no", "yes"))
    back = parse_libsvm(to_libsvm(ds))
    assert back.equals(ds)
    assert to_libsvm(back) == to_libsvm(ds)


# ---- delimited / KEEL ------------------------------------------------------


def test_delimited_minimal():
    ds = parse_delimited("@relation t\n1.0,2.0,yes\n3.0,4.0,no")
    assert (ds.n, ds.d) == (2, 2)
    assert ds.class_names == ("no", "yes")
    np.testing.assert_array_equal(ds.labels, [1, 0])


def test_delimited_golden_files(golden):
    ds = load_dataset(golden / "minimal.dat")
    assert ds.class_names == ("no", "yes")
    np.testing.assert_array_equal(ds.features, [[1.0, 2.0], [3.0, 4.0]])
    ds = load_dataset(golden / "crlf.dat")
    assert ds.class_names == ("negative", "positive")
    np.testing.assert_array_equal(ds.labels, [1, 0, 0])
    np.testing.assert_array_equal(ds.features[0], [5.5, 1.0])


def test_delimited_label_first():
    ds = parse_delimited("a;1;2\nb;3;4", delimiter=";", label_column="first")
    np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(ds.labels, [0, 1])


@pytest.mark.parametrize(
    "text, kind, line",
    [
        ("1,2\n3", "RaggedRow", 2),
        ("1,2,a\n3,4,b\n5,6,c", "TooManyLabels", 3),
        ("1,2,a\nx,4,b", "NonNumeric", 2),
        ("1,nan,a", "NonFinite", 1),
        ("@relation only\n% nothing else\n", "EmptyInput", None),
        ("", "EmptyInput", None),
    ],
)
def test_delimited_errors(text, kind, line):
    with pytest.raises(ParseError) as err:
        parse_delimited(text)
    assert err.value.kind == kind
    assert err.value.line == line


def test_sniff_and_load_errors(tmp_path):
    assert sniff_format("1 1:2\n") == "libsvm"
    assert sniff_format("@relation x\n1,2,a\n") == "keel"
    assert sniff_format("1,2,a\n") == "csv"
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing.libsvm")
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing.libsvm", fmt="xml")


def test_haberman_shape():
    path = find_dataset("haberman.dat")
    if path is None:
        pytest.skip("haberman.dat not present")
    ds = load_dataset(path)
    assert (ds.n, ds.d) == (306, 3)
    assert ds.has_both_classes()


def test_fourclass_shape():
    path = find_dataset("fourclass.libsvm", "fourclass")
    assert path is not None, "fourclass data file is not available in the data directory"
    ds = load_dataset(path, "libsvm")
    assert (ds.n, ds.d) == (862, 2)
    assert ds.has_both_classes()


# ---- dataset type ------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [0, 2])
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [0])
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan], [0.0]]), [0, 1])
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [0, 1], ids=[3, 3])
    ds = Dataset(np.zeros((2, 1)), [0, 1])
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_subset_keeps_ids():
    ds = Dataset(np.arange(10.0).reshape(5, 2), [0, 1, 0, 1, 1])
    sub = ds.subset([4, 1])
    np.testing.assert_array_equal(sub.ids, [4, 1])
    np.testing.assert_array_equal(sub.features, [[8, 9], [2, 3]])


# ---- spirals -------------------------------------------------------------------


def test_spirals_endpoints():
    ds = generate_two_spirals(4, 0.0, 123)
    np.testing.assert_allclose(ds.features[0], [0.1, 0.0], atol=1e-12)
    np.testing.assert_allclose(ds.features[1], [math.cos(4 * math.pi), math.sin(4 * math.pi)], atol=1e-12)
    np.testing.assert_allclose(ds.features[1], [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(ds.features[2:], -ds.features[:2], atol=0)
    np.testing.assert_array_equal(ds.labels, [0, 0, 1, 1])


def test_spirals_deterministic():
    a = generate_two_spirals(200, 0.02, 7)
    b = generate_two_spirals(200, 0.02, 7)
    assert a.features.tobytes() == b.features.tobytes()
    assert not np.array_equal(a.features, generate_two_spirals(200, 0.02, 8).features)


def test_spirals_on_curve_without_noise():
    ds = generate_two_spirals(50, 0.0, 1, radius=2.0)
    m = 25
    t = np.arange(m) / (m - 1)
    r = np.hypot(ds.features[:m, 0], ds.features[:m, 1])
    np.testing.assert_allclose(r, 2.0 * (0.1 + 0.9 * t), atol=1e-12)
    assert ds.class_counts() == (25, 25)


def test_spirals_noise_variance():
    a = generate_two_spirals(4000, 0.0, 3)
    b = generate_two_spirals(4000, 0.04, 3)
    assert abs(np.var(b.features - a.features) - 0.04) < 0.004


@pytest.mark.parametrize("n", [0, 2, 5, 201])
def test_spirals_bad_n(n):
    with pytest.raises(DataError):
        generate_two_spirals(n, 0.0, 0)


# ---- folds ---------------------------------------------------------------------


def test_kfold_tiny():
    plan = stratified_kfold([0, 0, 1, 1], 2, 5)
    for f in range(2):
        assert sorted(np.asarray([0, 0, 1, 1])[plan.test_rows(f)].tolist()) == [0, 1]


def test_kfold_sixty():
    y = np.repeat([0, 1], 30)
    plan = stratified_kfold(y, 10, 0)
    for f in range(10):
        rows = plan.test_rows(f)
        assert (y[rows] == 0).sum() == 3 and (y[rows] == 1).sum() == 3


def test_kfold_fallback():
    plan = stratified_kfold([0] * 9 + [1], 5, 0)
    assert not plan.stratified
    assert plan.fold_sizes() == [2, 2, 2, 2, 2]


def test_kfold_errors():
    with pytest.raises(DataError):
        stratified_kfold([0, 1, 0], 4, 0)
    with pytest.raises(DataError):
        stratified_kfold([0, 1, 0], 1, 0)


@given(st.lists(st.integers(0, 1), min_size=4, max_size=120), st.integers(2, 10), st.integers(0, 2**64 - 1))
def test_kfold_properties(labels, k, seed):
    y = np.array(labels)
    if k > len(y):
        with pytest.raises(DataError):
            stratified_kfold(y, k, seed)
        return
    plan = stratified_kfold(y, k, seed)
    assert plan.assignments.min() >= 0 and plan.assignments.max() < k
    sizes = plan.fold_sizes()
    assert min(sizes) >= 1 and max(sizes) - min(sizes) <= 1
    assert sorted(np.concatenate([plan.test_rows(f) for f in range(k)]).tolist()) == list(range(len(y)))
    if plan.stratified:
        for c in (0, 1):
            nc = int((y == c).sum())
            per = [int((y[plan.test_rows(f)] == c).sum()) for f in range(k)]
            assert all(abs(p - nc / k) < 1 for p in per)
    again = stratified_kfold(y, k, seed)
    np.testing.assert_array_equal(plan.assignments, again.assignments)


# ---- normalisation and priors ------------------------------------------------------


def test_normalize_constant_and_two_point():
    ds = Dataset(np.array([[1.0, 0.0], [1.0, 2.0]]), [0, 1])
    norm = normalize_fit(ds)
    assert norm.means[0] == 1.0 and norm.stddevs[0] == 1.0
    out = normalize_apply(norm, ds).features
    np.testing.assert_allclose(out[:, 0], [0, 0])
    np.testing.assert_allclose(out[:, 1], [-1, 1])
    with pytest.raises(DataError):
        norm.apply(np.zeros((3, 3)))


@given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 10_000))
def test_normalize_properties(n, d, seed):
    rng = make_rng(seed)
    x = rng.normal(size=(n, d)) * rng.uniform(0.1, 100, size=d) + rng.normal(size=d) * 50
    x[:, 0] = 3.0
    ds = Dataset(x, np.arange(n) % 2)
    z = normalize_apply(normalize_fit(ds), ds).features
    assert np.all(np.abs(z.mean(axis=0)) <= 1e-9)
    sd = z.std(axis=0)
    assert sd[0] == 0.0
    for s in sd[1:]:
        assert abs(s - 1.0) <= 1e-9 or s == 0.0


def test_class_priors():
    assert class_priors(Dataset(np.zeros((4, 1)), [0, 0, 1, 1])) == (0.5, 0.5)
    assert class_priors(Dataset(np.zeros((4, 1)), [0, 0, 0, 1])) == (0.75, 0.25)
    assert class_priors(Dataset(np.zeros((60, 1)), np.repeat([0, 1], 30))) == (0.5, 0.5)
    with pytest.raises(DataError):
        class_priors(Dataset(np.zeros((0, 1)), []))


def test_rng_streams():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, "a", 0) != derive_seed(1, "a", 1)
    np.testing.assert_array_equal(make_rng(5, "x").random(4), make_rng(5, "x").random(4))
