import numpy as np
import pytest
from hypothesis import given, strategies as st

from biars.grouping import (GroupingError, choose_groups, kmeans_groups, max_groups,
                            max_pairwise_spread)


def _sse(x, labels):
    return sum(((x[labels == g] - x[labels == g].mean(axis=0)) ** 2).sum()
               for g in np.unique(labels))


def _partition(labels):
    return frozenset(frozenset(np.flatnonzero(labels == g)) for g in np.unique(labels))


def _best_two_partition(x):
    K = len(x)
    best = (np.inf, None)
    for mask in range(1, 2 ** (K - 1)):
        lab = np.array([(mask >> i) & 1 for i in range(K)])
        best = min(best, (_sse(x, lab), tuple(lab)), key=lambda t: t[0])
    return np.array(best[1])


@pytest.mark.parametrize("seed", range(5))
def test_two_clouds_match_exhaustive_partition(seed):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal([1, 1], 0.2, (5, 2)), rng.normal([6, 6], 0.2, (5, 2))])
    gm = kmeans_groups(x, 2, seed=seed)
    assert _partition(gm.assignment) == _partition(_best_two_partition(x))
    assert _partition(gm.assignment) == _partition(np.r_[np.zeros(5), np.ones(5)].astype(int))


def test_one_user_per_group():
    x = np.random.default_rng(0).uniform(0, 8, (6, 2))
    gm = kmeans_groups(x, 6)
    assert sorted(gm.assignment) == list(range(6))


def test_colocated_users():
    x = np.ones((7, 2))
    gm = kmeans_groups(x, 3)
    assert set(gm.assignment) == {0, 1, 2}
    assert _sse(x, gm.assignment) == 0.0


def test_too_few_users():
    with pytest.raises(GroupingError):
        kmeans_groups(np.zeros((2, 2)), 3)
    with pytest.raises(GroupingError):
        kmeans_groups(np.zeros((2, 2)), 0)


@given(st.integers(0, 10_000), st.integers(2, 30), st.integers(1, 5))
def test_groups_nonempty_and_lloyd_monotone(seed, K, G):
    G = min(G, K)
    x = np.random.default_rng(seed).uniform(0, 8, (K, 2))
    gm = kmeans_groups(x, G, seed=seed)
    assert len(gm.assignment) == K
    assert np.all(np.bincount(gm.assignment, minlength=G) >= 1)
    h = np.array(gm.history)
    assert np.all(np.diff(h) <= 1e-9 * max(1.0, h[0]))


@given(st.integers(0, 10_000))
def test_permutation_changes_labels_only(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 8, (12, 2))
    perm = rng.permutation(12)
    a = kmeans_groups(x, 3, seed=1)
    b = kmeans_groups(x[perm], 3, seed=1)
    relabelled = np.empty(12, dtype=int)
    relabelled[perm] = b.assignment
    assert np.array_equal(a.assignment, relabelled)


def test_deterministic():
    x = np.random.default_rng(2).uniform(0, 8, (20, 2))
    assert np.array_equal(kmeans_groups(x, 4, seed=3).assignment,
                          kmeans_groups(x, 4, seed=3).assignment)


def test_max_groups_respects_slot_cap():
    assert max_groups(16) == 4
    assert max_groups(3) > 10


def test_choose_groups_threshold():
    rng = np.random.default_rng(4)
    centres = np.array([[1, 1], [7, 1], [1, 7]])
    x = np.vstack([rng.normal(c, 0.1, (4, 2)) for c in centres])
    gm = choose_groups(x, 16, d_th=1.0)
    assert gm.G == 3
    assert max_pairwise_spread(x, gm.assignment) <= 2.0


def test_choose_groups_capped():
    x = np.random.default_rng(5).uniform(0, 8, (20, 2))
    gm = choose_groups(x, 16, d_th=0.1)
    assert gm.G == 4
    assert choose_groups(x, 16, d_th=0.1, G_max=2).G == 2
