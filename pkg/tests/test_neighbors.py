"""Neighbor ranking: the feature-weighted loss and both rankers against
brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest

from fgns.errors import InputError
from fgns.neighbors import feature_loss, rank_fgns, rank_knn

from .oracles import euclidean_loop, feature_loss_loop, rank_by_loss, rank_by_score_id


def _random_masks(rng: np.random.Generator, shape, k: int) -> list[np.ndarray]:
    masks = []
    for _ in range(k):
        m = rng.random(shape) < 0.3
        if not m.any():
            m[rng.integers(shape[0]), rng.integers(shape[1])] = True
        masks.append(m)
    return masks


def test_loss_zero_at_prototype() -> None:
    rng = np.random.default_rng(0)
    proto = rng.random((6, 6))
    masks = _random_masks(rng, (6, 6), 3)
    assert feature_loss(proto, proto, masks, rho=1.7) == 0.0


def test_loss_matches_loop_oracle() -> None:
    rng = np.random.default_rng(1)
    for _ in range(50):
        cand = rng.random((5, 4))
        proto = rng.random((5, 4))
        masks = _random_masks(rng, (5, 4), int(rng.integers(1, 5)))
        rho = float(rng.uniform(0.1, 3.0))
        got = feature_loss(cand, proto, masks, rho)
        want = feature_loss_loop(cand, proto, masks, rho)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_loss_linear_in_rho() -> None:
    rng = np.random.default_rng(2)
    cand = rng.random((6, 6))
    proto = rng.random((6, 6))
    masks = _random_masks(rng, (6, 6), 4)
    base = feature_loss(cand, proto, masks, rho=1.0)
    for rho in (0.25, 2.0, 7.5):
        assert feature_loss(cand, proto, masks, rho) == pytest.approx(rho * base, rel=1e-12)


def test_loss_additive_over_disjoint_masks() -> None:
    rng = np.random.default_rng(3)
    cand = rng.random((4, 8))
    proto = rng.random((4, 8))
    m1 = np.zeros((4, 8), dtype=bool)
    m1[:, :3] = True
    m2 = np.zeros((4, 8), dtype=bool)
    m2[:, 5:] = True
    both = feature_loss(cand, proto, [m1, m2], rho=1.0)
    split = feature_loss(cand, proto, [m1], 1.0) + feature_loss(cand, proto, [m2], 1.0)
    assert both == pytest.approx(split, rel=1e-9)


def test_loss_rejects_empty_masks() -> None:
    img = np.zeros((3, 3))
    with pytest.raises(InputError):
        feature_loss(img, img, [], rho=1.0)


def test_loss_ranking_invariant_to_rho() -> None:
    rng = np.random.default_rng(4)
    proto = rng.random((5, 5))
    masks = _random_masks(rng, (5, 5), 3)
    cands = rng.random((30, 5, 5))
    for rho in (0.01, 1.0, 42.0):
        losses = [feature_loss(c, proto, masks, rho) for c in cands]
        assert rank_by_loss(losses, 30) == rank_by_loss(
            [feature_loss(c, proto, masks, 1.0) for c in cands], 30
        )


def test_rank_fgns_matches_brute_force_on_random_pools() -> None:
    rng = np.random.default_rng(5)
    for trial in range(30):
        n_pool = int(rng.integers(3, 40))
        shape = (6, 6)
        pool = rng.random((n_pool, *shape))
        ids = rng.choice(10_000, size=n_pool, replace=False).astype(np.int64)
        proto = rng.random(shape)
        masks = _random_masks(rng, shape, int(rng.integers(1, 6)))
        rho = float(rng.uniform(0.2, 2.0))
        n = int(rng.integers(1, n_pool + 3))  # sometimes past the pool size
        got = rank_fgns(pool, ids, proto, masks, rho=rho, n=n)
        assert len(got) == min(n, n_pool)
        losses = [feature_loss_loop(pool[i], proto, masks, rho) for i in range(n_pool)]
        want_idx = rank_by_score_id(losses, [int(i) for i in ids], n)
        assert [g[0] for g in got] == [int(ids[i]) for i in want_idx]
        for (gid, gscore), idx in zip(got, want_idx):
            assert gscore == pytest.approx(losses[idx], rel=1e-9, abs=1e-12)


def test_rank_fgns_breaks_ties_by_ascending_id() -> None:
    shape = (3, 3)
    img = np.full(shape, 0.4)
    pool = np.stack([img, img, img])
    ids = np.array([30, 10, 20], dtype=np.int64)
    proto = np.zeros(shape)
    masks = [np.ones(shape, dtype=bool)]
    got = rank_fgns(pool, ids, proto, masks, rho=1.0, n=3)
    assert [g[0] for g in got] == [10, 20, 30]  # equal losses sort by id


def test_rank_fgns_saturates_on_small_pool() -> None:
    pool = np.zeros((2, 3, 3))
    ids = np.array([5, 2], dtype=np.int64)
    got = rank_fgns(pool, ids, np.zeros((3, 3)), [np.ones((3, 3), dtype=bool)], rho=1.0, n=3)
    assert [g[0] for g in got] == [2, 5]  # both returned, no padding


def test_rank_fgns_rejects_empty_pool() -> None:
    pool = np.zeros((0, 3, 3))
    ids = np.zeros(0, dtype=np.int64)
    with pytest.raises(InputError):
        rank_fgns(pool, ids, np.zeros((3, 3)), [np.ones((3, 3), dtype=bool)], rho=1.0, n=3)


def test_rank_knn_matches_brute_force() -> None:
    rng = np.random.default_rng(6)
    for trial in range(30):
        n_pool = int(rng.integers(3, 40))
        dim = 12
        vecs = rng.normal(size=(n_pool, dim))
        ids = rng.choice(10_000, size=n_pool, replace=False).astype(np.int64)
        q = rng.normal(size=dim)
        n = int(rng.integers(1, n_pool + 3))
        got = rank_knn(vecs, ids, q, n=n)
        assert len(got) == min(n, n_pool)
        dists = [euclidean_loop(vecs[i], q) for i in range(n_pool)]
        want_idx = rank_by_score_id(dists, [int(i) for i in ids], n)
        assert [g[0] for g in got] == [int(ids[i]) for i in want_idx]
        for (gid, gscore), idx in zip(got, want_idx):
            assert gscore == pytest.approx(dists[idx], rel=1e-9, abs=1e-12)


def test_rank_knn_tie_break_and_saturation() -> None:
    vecs = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    ids = np.array([9, 4, 7], dtype=np.int64)
    got = rank_knn(vecs, ids, np.array([1.0, 0.0]), n=2)
    assert [g[0] for g in got] == [4, 9]  # equal distances sort by id
    assert got[0][1] == 0.0
    got_all = rank_knn(vecs, ids, np.array([0.0, 0.0]), n=5)
    assert len(got_all) == 3
    with pytest.raises(InputError):
        rank_knn(np.zeros((0, 2)), np.zeros(0, dtype=np.int64), np.array([0.0, 0.0]), n=1)


def test_best_score_never_worsens_when_pool_grows() -> None:
    rng = np.random.default_rng(7)
    shape = (4, 4)
    proto = rng.random(shape)
    masks = _random_masks(rng, shape, 3)
    for trial in range(20):
        pool = rng.random((10, *shape))
        ids = np.arange(10, dtype=np.int64)
        extra = rng.random((1, *shape))
        before = rank_fgns(pool, ids, proto, masks, rho=1.0, n=1)[0][1]
        grown = np.concatenate([pool, extra])
        after = rank_fgns(grown, np.arange(11, dtype=np.int64), proto, masks, rho=1.0, n=1)[0][1]
        assert after <= before

        q = rng.random(16)
        vecs = rng.random((10, 16))
        before_d = rank_knn(vecs, ids, q, n=1)[0][1]
        after_d = rank_knn(np.concatenate([vecs, rng.random((1, 16))]),
                           np.arange(11, dtype=np.int64), q, n=1)[0][1]
        assert after_d <= before_d
