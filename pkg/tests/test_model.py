import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fuseclust.model import (
    ClusterStats,
    DataError,
    DataSet,
    GroundTruth,
    ParseError,
    coherence,
    dataset_stats,
    dump_csv,
    load_csv,
    load_labels,
    load_wine,
    partial_distance,
    partial_distance_matrix,
)

from conftest import random_dataset


# ---- DataSet ---------------------------------------------------------------

def test_dataset_hides_unobserved_values():
    d = DataSet([[1.0, 2.0], [3.0, 4.0]], [[True, False], [True, True]])
    assert d.shape == (2, 2)
    assert d.features == 2 and d.points == 2
    assert math.isnan(d.values[0, 1])
    with pytest.raises(DataError):
        d.value(0, 1)
    assert d.value(1, 1) == 4.0


def test_dataset_is_read_only():
    d = DataSet(np.ones((2, 3)))
    with pytest.raises(ValueError):
        d.values[0, 0] = 5.0
    with pytest.raises(ValueError):
        d.mask[0, 0] = False


def test_dataset_shape_mismatch():
    with pytest.raises(DataError):
        DataSet(np.ones((2, 3)), np.ones((3, 2), dtype=bool))


def test_dataset_rejects_nonfinite_observed():
    with pytest.raises(DataError):
        DataSet([[np.inf]], [[True]])


def test_default_mask_from_nan():
    d = DataSet([[1.0, np.nan]])
    assert d.mask.tolist() == [[True, False]]
    assert d.observed_fraction() == 0.5
    assert not d.is_complete()


def test_filled_and_means():
    d = DataSet([[1.0, np.nan, 3.0], [np.nan, np.nan, np.nan]])
    assert d.observed_means().tolist() == [2.0, 0.0]
    f = d.filled(d.observed_means())
    assert f.tolist() == [[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]
    assert d.filled(-1.0)[0, 1] == -1.0


def test_with_mask_only_hides():
    d = DataSet([[1.0, np.nan]])
    d2 = d.with_mask([[False, True]])
    assert not d2.mask.any()


def test_observed_and_take():
    d = DataSet([[1.0, 2.0], [np.nan, 4.0]])
    idx, vals = d.observed(0)
    assert idx.tolist() == [0] and vals.tolist() == [1.0]
    t = d.take([1])
    assert t.values.tolist() == [[2.0], [4.0]]


# ---- GroundTruth / stats ---------------------------------------------------

def test_ground_truth_requires_equal_sizes():
    with pytest.raises(DataError):
        GroundTruth([1, 1, 2], np.zeros((2, 2)))
    g = GroundTruth([1, 2, 1, 2], np.zeros((2, 2)))
    assert g.K == 2 and g.M == 2


def test_cluster_stats_derived():
    s = ClusterStats(delta=2.0, epsilon=0.5, mu0=1.5, c=4.0, P=16)
    assert s.kappa == pytest.approx(0.5 * 4 / 2.0)
    assert s.kappa_prime == pytest.approx(0.5 * 4 / 4.0)


def test_dataset_stats_singletons():
    # two singleton clusters at 0 and e1 in R^3
    X = np.array([[0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    truth = GroundTruth([1, 2], X.copy())
    s = dataset_stats(DataSet(X), truth)
    assert s.delta == 1.0
    assert s.epsilon == 0.0
    assert s.kappa == 0.0
    assert s.mu0 == 3.0
    assert s.c == 1.0


def test_dataset_stats_brute_force(rng):
    P, K, M = 5, 3, 4
    C = rng.normal(size=(P, K)) * 3
    labels = np.repeat(np.arange(1, K + 1), M)
    X = C[:, labels - 1] + rng.uniform(-0.2, 0.2, (P, K * M))
    s = dataset_stats(DataSet(X), GroundTruth(labels, C))
    delta, eps, mu0 = math.inf, 0.0, 1.0
    for i in range(K * M):
        for j in range(K * M):
            d = X[:, i] - X[:, j]
            if labels[i] == labels[j]:
                eps = max(eps, np.abs(d).max())
            else:
                delta = min(delta, np.linalg.norm(d))
                mu0 = max(mu0, P * np.abs(d).max() ** 2 / (d @ d))
    assert s.delta == pytest.approx(delta)
    assert s.epsilon == pytest.approx(eps)
    assert s.mu0 == pytest.approx(mu0)
    assert 1.0 <= s.mu0 <= P


def test_dataset_stats_errors():
    X = np.zeros((2, 2))
    with pytest.raises(DataError):
        dataset_stats(DataSet(X, [[True, False], [True, True]]), GroundTruth([1, 2], X))
    with pytest.raises(DataError):
        dataset_stats(DataSet(X), GroundTruth([1, 1], np.zeros((2, 1))))


# ---- coherence ---------------------------------------------------------------

@pytest.mark.parametrize("y, expected", [
    ((1, 0, 0, 0), 4.0),
    ((1, 1, 1, 1), 1.0),
    ((3, 4), 1.28),
])
def test_coherence_examples(y, expected):
    assert coherence(y) == pytest.approx(expected, rel=1e-15)


def test_coherence_zero():
    with pytest.raises(DataError):
        coherence([0.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 12),
              elements=st.floats(-1e3, 1e3, allow_nan=False)).filter(
                  lambda y: np.abs(y).max() > 1e-3),
       st.floats(0.01, 100) | st.floats(-100, -0.01))
def test_coherence_scale_invariant_and_bounded(y, a):
    c = coherence(y)
    assert 1.0 - 1e-12 <= c <= y.size + 1e-9
    assert coherence(a * y) == pytest.approx(c, rel=1e-9)


# ---- partial distance --------------------------------------------------------

def test_partial_distance_examples():
    assert partial_distance([0, 0], [3, 4]) == pytest.approx(5.0)
    d = partial_distance([0, 0], [3, 4], [True, False], [True, True])
    assert d == pytest.approx(3 * math.sqrt(2))
    assert partial_distance([0, 0], [3, 4], [True, False], [False, True]) is None


def test_partial_distance_length_mismatch():
    with pytest.raises(DataError):
        partial_distance([0, 0], [1, 2, 3])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_partial_distance_symmetric_and_permutation_invariant(P, seed):
    r = np.random.default_rng(seed)
    x1, x2 = r.normal(size=P), r.normal(size=P)
    m1, m2 = r.random(P) < 0.7, r.random(P) < 0.7
    d = partial_distance(x1, x2, m1, m2)
    assert d == partial_distance(x2, x1, m2, m1)
    perm = r.permutation(P)
    dp = partial_distance(x1[perm], x2[perm], m1[perm], m2[perm])
    if d is None:
        assert dp is None
    else:
        assert dp == pytest.approx(d, rel=1e-12)


def test_partial_distance_matrix_matches_pairwise(rng):
    data = random_dataset(rng, P=6, N=7, p_obs=0.5)
    D = partial_distance_matrix(data)
    for i in range(7):
        for j in range(7):
            d = partial_distance(data.values[:, i], data.values[:, j],
                                 data.mask[:, i], data.mask[:, j])
            if d is None:
                assert math.isnan(D[i, j])
            else:
                assert D[i, j] == pytest.approx(d, rel=1e-12, abs=1e-15)


def test_partial_distance_unbiased_small():
    # exact expectation over all q-subsets: E ||y_w||^2 = (q/P) ||y||^2
    from itertools import combinations
    y = np.array([1.0, -2.0, 0.5, 3.0, 0.0])
    P, q = y.size, 2
    vals = [np.sum(y[list(w)] ** 2) for w in combinations(range(P), q)]
    assert np.mean(vals) == pytest.approx(q / P * np.sum(y ** 2), rel=1e-14)


# ---- CSV -----------------------------------------------------------------------

def test_load_csv_missing_token():
    d = load_csv("1,2\nNA,4", missing_tokens={"NA"})
    assert d.shape == (2, 2)
    # point 2 (row 2), feature 1 is missing
    assert d.mask.tolist() == [[True, False], [True, True]]


def test_load_csv_bad_cell_location():
    with pytest.raises(ParseError) as e:
        load_csv("1,2\n3,x", missing_tokens={"NA"})
    assert (e.value.row, e.value.col) == (2, 2)


def test_load_csv_ragged_and_empty():
    with pytest.raises(ParseError) as e:
        load_csv("1,2\n3\n")
    assert e.value.row == 2
    with pytest.raises(ParseError):
        load_csv("")


def test_load_csv_default_tokens_and_header():
    d = load_csv("a,b,c\n1,,nan\nNaN,na,2\n", header=True)
    assert d.mask.T.tolist() == [[True, False, False], [False, False, True]]


def test_load_csv_orientation():
    d = load_csv("1,2,3\n4,5,6", orientation="rows-are-features")
    assert d.shape == (2, 3)
    assert d.values[1, 2] == 6.0


def test_csv_round_trip(rng):
    data = random_dataset(rng, P=5, N=9, p_obs=0.6)
    for orient in ("rows-are-points", "rows-are-features"):
        back = load_csv(dump_csv(data, orient), orientation=orient)
        assert np.array_equal(back.mask, data.mask)
        assert np.array_equal(back.values[data.mask], data.values[data.mask])
    assert "NA" in dump_csv(data)


def test_load_labels():
    assert load_labels("label\n1\n2\n\n2\n").tolist() == [1, 2, 2]
    with pytest.raises(ParseError):
        load_labels("1\nfoo\n")


def test_load_wine(tmp_path):
    rows = ["1," + ",".join(str(v) for v in range(13)), "3," + ",".join("1.5" for _ in range(13))]
    path = tmp_path / "wine.data"
    path.write_text("\n".join(rows) + "\n")
    data, labels = load_wine(path)
    assert data.shape == (13, 2)
    assert labels.tolist() == [1, 3]
