import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nearconvex.dataset import (DataError, WeightedPointSet, concat, iter_csv, load_csv,
                                normalize_max_norm, save_csv, standardize)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_default_weights_and_no_labels(tmp_path):
    ps = load_csv(write(tmp_path / "a.csv", "f0,f1\n1,2\n3,4\n5,6\n"))
    assert ps.n == 3 and ps.d == 2
    assert np.all(ps.weights == 1)
    assert ps.labels is None
    assert ps.feature_names == ("f0", "f1")


def test_labels_kept_in_order(tmp_path):
    ps = load_csv(write(tmp_path / "a.csv", "f0,label\n1,1\n2,-1\n3,1\n"))
    assert ps.labels.tolist() == [1, -1, 1]
    assert ps.d == 1


def test_weight_column_read(tmp_path):
    ps = load_csv(write(tmp_path / "a.csv", "x,weight,y\n1,2.5,0\n2,0.5,1\n"))
    assert ps.feature_names == ("x", "y")
    assert ps.weights.tolist() == [2.5, 0.5]


@pytest.mark.parametrize("body, needle", [
    ("f0,f1\n1,2\nNaN,3\n", "row 2"),
    ("f0,f1\n1,2\n1,inf\n", "row 2, column 'f1'"),
    ("f0,f1\n1,abc\n", "row 1, column 'f1'"),
    ("f0,label\n1,2\n", "row 1, column 'label'"),
    ("f0,weight\n1,0\n", "row 1, column 'weight'"),
    ("f0,weight\n1,1\n1,-2\n", "row 2, column 'weight'"),
    ("f0,f1\n1\n", "row 1"),
])
def test_load_errors_name_row_and_column(tmp_path, body, needle):
    with pytest.raises(DataError, match=needle):
        load_csv(write(tmp_path / "bad.csv", body))


def test_empty_and_headerless(tmp_path):
    with pytest.raises(DataError):
        load_csv(write(tmp_path / "e.csv", ""))
    with pytest.raises(DataError):
        load_csv(write(tmp_path / "h.csv", "f0,f1\n"))


def test_invariants_enforced():
    with pytest.raises(DataError):
        WeightedPointSet(np.zeros((0, 2)))
    with pytest.raises(DataError):
        WeightedPointSet(np.ones((2, 2)), [1.0, 0.0])
    with pytest.raises(DataError):
        WeightedPointSet(np.ones((2, 2)), None, [1, 0])
    with pytest.raises(DataError):
        WeightedPointSet(np.array([[1.0, np.nan]]))


def test_immutable():
    ps = WeightedPointSet(np.ones((2, 2)))
    with pytest.raises(ValueError):
        ps.points[0, 0] = 3.0


def test_round_trip_is_bit_identical(tmp_path, rng):
    X = rng.standard_normal((20, 3)) * 10.0 ** rng.integers(-8, 8, (20, 1))
    w = rng.uniform(0.1, 5, 20)
    y = np.where(rng.random(20) < 0.5, 1, -1)
    ps = WeightedPointSet(X, w, y)
    save_csv(tmp_path / "a.csv", ps)
    back = load_csv(tmp_path / "a.csv")
    save_csv(tmp_path / "b.csv", back)
    assert np.array_equal(back.points, ps.points)
    assert np.array_equal(back.weights, ps.weights)
    assert np.array_equal(back.labels, ps.labels)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_decimal_input_round_trip(tmp_path):
    src = write(tmp_path / "a.csv", "f0,f1\n0.1,2.675\n-3.0001,1e-7\n")
    ps = load_csv(src)
    save_csv(tmp_path / "b.csv", ps, write_weights=False)
    again = load_csv(tmp_path / "b.csv")
    assert np.array_equal(ps.points, again.points)


def test_source_row_column_is_not_a_feature(tmp_path):
    ps = WeightedPointSet(np.arange(6.0).reshape(3, 2))
    save_csv(tmp_path / "c.csv", ps, source_rows=[4, 0, 2])
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header == "f0,f1,weight,source_row"
    assert load_csv(tmp_path / "c.csv").d == 2


def test_iter_csv_chunks_match_load(tmp_path, rng):
    ps = WeightedPointSet(rng.standard_normal((23, 2)))
    save_csv(tmp_path / "a.csv", ps)
    chunks = list(iter_csv(tmp_path / "a.csv", 5))
    assert [c.n for c in chunks] == [5, 5, 5, 5, 3]
    assert np.array_equal(concat(chunks).points, ps.points)


def test_iter_csv_error_row_numbers_are_global(tmp_path):
    write(tmp_path / "a.csv", "f0\n1\n2\n3\nx\n")
    with pytest.raises(DataError, match="row 4"):
        list(iter_csv(tmp_path / "a.csv", 2))


def test_standardize_two_values():
    out = standardize(WeightedPointSet(np.array([[1.0], [3.0]])))
    assert np.allclose(out.points.ravel(), [-1, 1], atol=1e-15)


def test_standardize_constant_column():
    out = standardize(WeightedPointSet(np.array([[5.0, 1], [5, 2], [5, 3]])))
    assert np.all(out.points[:, 0] == 0)


def test_standardize_needs_two_points():
    with pytest.raises(DataError):
        standardize(WeightedPointSet(np.array([[1.0, 2.0]])))


def test_normalize_max_norm_examples():
    out = normalize_max_norm(WeightedPointSet(np.array([[3.0, 4], [0, 1]])))
    assert np.allclose(out.points, [[0.6, 0.8], [0, 0.2]], atol=1e-15)
    unit = WeightedPointSet(np.array([[0.0, 1.0]]))
    assert np.array_equal(normalize_max_norm(unit).points, unit.points)
    z = normalize_max_norm(WeightedPointSet(np.array([[0.0, 0], [2, 0]])))
    assert np.all(z.points[0] == 0)
    with pytest.raises(DataError):
        normalize_max_norm(WeightedPointSet(np.zeros((3, 2))))


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)), elements=finite))
def test_standardize_idempotent(X):
    once = standardize(WeightedPointSet(X))
    twice = standardize(once)
    assert np.allclose(once.points, twice.points, atol=1e-12, rtol=0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4)), elements=finite))
def test_normalize_gives_unit_max_norm(X):
    if not np.any(X):
        X[0, 0] = 1.0
    out = normalize_max_norm(WeightedPointSet(X))
    assert abs(np.linalg.norm(out.points, axis=1).max() - 1.0) <= 1e-12
