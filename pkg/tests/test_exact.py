import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuseclust.exact import (
    MAX_EXACT_POINTS,
    CapacityError,
    Partition,
    brute_force_l0,
    compatibility_matrix,
    group_feasible,
    l0_cost,
    restricted_growth_strings,
    solve_l0_exact,
)
from fuseclust.experiments import SyntheticSpec, generate_clusters, apply_sampling
from fuseclust.model import DataSet, dataset_stats

from conftest import separated_instance


def bell_numbers(n):
    """Bell triangle."""
    row = [1]
    out = [1]
    for _ in range(n):
        new = [row[-1]]
        for v in row:
            new.append(new[-1] + v)
        row = new
        out.append(row[0])
    return out


# ---- Partition ------------------------------------------------------------

def test_partition_canonical_equality():
    a = Partition(((3, 1), (0, 2)))
    b = Partition(((0, 2), (1, 3)))
    assert a == b
    assert a.groups == ((0, 2), (1, 3))
    assert a.labels().tolist() == [1, 2, 1, 2]
    assert a.rgs() == (0, 1, 0, 1)
    assert a.sizes == [2, 2] and len(a) == 2 and a.n_points == 4


def test_partition_from_labels():
    p = Partition.from_labels([5, 5, 2, 9])
    assert p.groups == ((0, 1), (2,), (3,))


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition(((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        Partition(((0,), ()))
    with pytest.raises(ValueError):
        Partition(((0,), (2,)))


def test_partition_centers_follow_reordering():
    C = np.array([[10.0, 20.0]])
    p = Partition(((1,), (0,)), C)
    assert p.groups == ((0,), (1,))
    assert p.centers.tolist() == [[20.0, 10.0]]


# ---- enumeration ------------------------------------------------------------

def test_rgs_counts_are_bell_numbers():
    bell = bell_numbers(10)
    for n in range(0, 10):
        assert sum(1 for _ in restricted_growth_strings(n)) == bell[n]


def test_rgs_are_distinct_partitions_in_order():
    seqs = list(restricted_growth_strings(6))
    assert seqs == sorted(seqs)
    parts = {Partition.from_labels(a) for a in seqs}
    assert len(parts) == len(seqs)
    for a in seqs:
        assert a[0] == 0
        assert all(a[i] <= 1 + max(a[:i]) for i in range(1, len(a)))


# ---- feasibility -------------------------------------------------------------

def test_group_feasible_examples():
    d = DataSet(np.array([[0.0, 0.8, 1.2], [0.0, 0.3, 0.0]]))
    assert group_feasible(d, [2], 1.0)
    assert group_feasible(d, [0, 1], 1.0)
    assert not group_feasible(d, [0, 2], 1.0)
    with pytest.raises(ValueError):
        group_feasible(d, [], 1.0)


def test_group_feasible_ignores_unshared_features():
    d = DataSet(np.array([[0.0, np.nan], [np.nan, 5.0]]))
    assert group_feasible(d, [0, 1], 0.0)


def _box_oracle(data, idx, eps):
    """A shared center exists iff the boxes [x - eps/2, x + eps/2] intersect per feature."""
    for p in range(data.features):
        lo, hi = -np.inf, np.inf
        for i in idx:
            if data.mask[p, i]:
                lo = max(lo, data.values[p, i] - eps / 2)
                hi = min(hi, data.values[p, i] + eps / 2)
        if lo > hi + 1e-12:
            return False
    return True


def test_group_feasible_matches_box_intersection(rng):
    for _ in range(200):
        P, N = 3, 5
        data = DataSet(rng.uniform(0, 2, (P, N)), rng.random((P, N)) < 0.7)
        eps = rng.uniform(0.2, 1.5)
        idx = [i for i in range(N) if rng.random() < 0.6] or [0]
        assert group_feasible(data, idx, eps) == _box_oracle(data, idx, eps)


def test_helly_pairwise_implies_group(rng):
    for _ in range(100):
        data = DataSet(rng.uniform(0, 2, (3, 6)), rng.random((3, 6)) < 0.8)
        eps = rng.uniform(0.3, 1.5)
        comp = compatibility_matrix(data, eps)
        for r in range(2, 5):
            for g in itertools.combinations(range(6), r):
                pairwise = all(comp[i, j] for i, j in itertools.combinations(g, 2))
                assert pairwise == group_feasible(data, g, eps)


def test_feasibility_monotone_in_epsilon(rng):
    for _ in range(100):
        data = DataSet(rng.normal(size=(4, 5)), rng.random((4, 5)) < 0.8)
        idx = list(range(5))
        eps = rng.uniform(0, 3)
        if group_feasible(data, idx, eps):
            assert group_feasible(data, idx, eps * 1.5)


# ---- cost ---------------------------------------------------------------------

def test_l0_cost_examples():
    assert l0_cost(Partition(((0, 1), (2, 3))), 4) == 8
    assert l0_cost(Partition(((0, 1, 2, 3),)), 4) == 0
    assert l0_cost(Partition(((0,), (1,), (2,), (3,))), 4) == 12
    with pytest.raises(ValueError):
        l0_cost(Partition(((0, 1),)), 3)


def test_l0_cost_counts_distinct_center_pairs(rng):
    for _ in range(20):
        labels = rng.integers(0, 3, 7)
        p = Partition.from_labels(labels)
        pairs = sum(1 for i in range(7) for j in range(7) if labels[i] != labels[j])
        assert l0_cost(p, 7) == pairs
        perm = rng.permutation(7)
        relabeled = Partition.from_labels((labels[perm] + 5) % 3)
        assert l0_cost(relabeled, 7) == pairs


# ---- exact solver -------------------------------------------------------------

def test_exact_identical_points():
    d = DataSet(np.ones((3, 5)))
    p = solve_l0_exact(d, 0.0)
    assert p.groups == ((0, 1, 2, 3, 4),)
    assert np.allclose(p.centers, 1.0)


def test_exact_two_tight_pairs():
    X = np.array([[0.0, 0.1, 5.0, 5.1], [0.0, 0.05, 1.0, 0.95]])
    p = solve_l0_exact(DataSet(X), 0.2)
    assert p.groups == ((0, 1), (2, 3))
    assert np.allclose(p.centers[:, 0], [0.05, 0.025])


def test_exact_capacity():
    d = DataSet(np.zeros((1, MAX_EXACT_POINTS + 1)))
    with pytest.raises(CapacityError):
        solve_l0_exact(d, 1.0)


def test_exact_tie_break_fewest_groups_then_lexicographic():
    # a chain 0 - 1 - 2 on a line with eps 1: {0,1},{2} and {0},{1,2} tie on cost
    d = DataSet(np.array([[0.0, 1.0, 2.0]]))
    p = solve_l0_exact(d, 1.0)
    assert p.groups == ((0, 1), (2,))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(1, 3), st.floats(0.1, 2.0), st.integers(0, 2 ** 31 - 1))
def test_exact_matches_brute_force(N, P, eps, seed):
    r = np.random.default_rng(seed)
    data = DataSet(r.uniform(0, 3, (P, N)), r.random((P, N)) < 0.8)
    fast = solve_l0_exact(data, eps)
    slow = brute_force_l0(data, eps)
    assert fast == slow
    assert all(group_feasible(data, g, eps) for g in fast.groups)


def test_exact_centers_are_feasible(rng):
    for _ in range(20):
        data = DataSet(rng.uniform(0, 2, (3, 7)), rng.random((3, 7)) < 0.7)
        eps = 0.8
        p = solve_l0_exact(data, eps)
        for k, g in enumerate(p.groups):
            for i in g:
                obs = data.mask[:, i]
                gap = np.abs(data.values[obs, i] - p.centers[obs, k])
                assert np.all(gap <= eps / 2 + 1e-12)


def test_theorem2_small_instances():
    # fully observed, kappa < 1: the l0 solution is the ground truth
    for seed in range(25):
        data, truth = separated_instance(K=2, M=3 + seed % 3, P=8, seed=seed)
        st_ = dataset_stats(data, truth)
        assert st_.kappa < 1
        p = solve_l0_exact(data, st_.epsilon)
        assert set(p.groups) == set(truth.groups)


def test_lemma1_same_cluster_pairs_feasible(rng):
    spec = SyntheticSpec(K=3, M=10, P=20, noise="uniform", epsilon=0.3, center_sep=2, seed=4)
    data, truth = generate_clusters(spec)
    data = apply_sampling(data, 0.6, 1)
    for g in truth.groups:
        for i, j in itertools.combinations(g, 2):
            assert group_feasible(data, [i, j], 0.3)


def test_noiseless_recovery_with_missing():
    # variance 0: eps = 0 constraints, ground truth recovered if no inter-cluster
    # pair agrees on all of its common features
    spec = SyntheticSpec(K=2, M=4, P=10, noise="gaussian", variance=0.0, center_sep=1.0, seed=3)
    data, truth = generate_clusters(spec)
    checked = 0
    for seed in range(10):
        sub = apply_sampling(data, 0.5, seed)
        p = solve_l0_exact(sub, 0.0)
        comp = compatibility_matrix(sub, 0.0)
        inter_ok = all(not comp[i, j] for i in range(8) for j in range(8)
                       if truth.labels[i] != truth.labels[j])
        intra_shared = all(comp[i, j] for g in truth.groups for i in g for j in g)
        if inter_ok and intra_shared:
            assert set(p.groups) == set(truth.groups)
            checked += 1
    assert checked >= 5


def test_exact_recovers_truth_with_missing_entries():
    # N=6, K=2, M=3, P=8, p0=0.9, kappa about 0.3
    data, truth = separated_instance(K=2, M=3, P=8, seed=7, eps=0.1, sep=1.0)
    stats = dataset_stats(data, truth)
    assert 0.2 < stats.kappa < 0.4
    sub = apply_sampling(data, 0.9, 11)
    p = solve_l0_exact(sub, stats.epsilon)
    assert set(p.groups) == set(truth.groups)
