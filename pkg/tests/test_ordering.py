import numpy as np
import pytest

from cholsel.ordering import (
    Ordering,
    knn_candidates,
    reverse_maximin,
    rho_ball_candidates,
)
from oracles import brute_maximin


class TestReverseMaximin:
    def test_three_point_line(self):
        pts = np.array([[0.0], [1.0], [2.0]])
        order = reverse_maximin(pts, p=1, seed_index=0)
        np.testing.assert_array_equal(order.perm, [1, 2, 0])
        assert order.scales[0] == np.inf
        assert order.scales[2] == pytest.approx(2.0)
        assert order.scales[1] == pytest.approx(1.0)

    def test_single_point(self):
        order = reverse_maximin(np.zeros((1, 3)), p=1)
        np.testing.assert_array_equal(order.perm, [0])
        assert order.scales[0] == np.inf

    def test_p_larger_than_n(self):
        with pytest.raises(ValueError):
            reverse_maximin(np.zeros((3, 1)), p=4)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        pts = rng.uniform(size=(40, 2))
        order = reverse_maximin(pts, p=1, seed_index=7)
        perm, scales = brute_maximin(pts, seed=7)
        np.testing.assert_array_equal(order.perm, perm)
        np.testing.assert_array_equal(order.scales, scales)

    def test_monotone_scales(self):
        rng = np.random.default_rng(12)
        pts = rng.uniform(size=(60, 2))
        order = reverse_maximin(pts, p=1)
        by_position = order.scales[order.perm]
        assert np.all(np.diff(by_position) >= 0)

    def test_infinite_sentinels_for_last_p(self):
        rng = np.random.default_rng(13)
        pts = rng.uniform(size=(20, 2))
        for p in (1, 2, 3):
            order = reverse_maximin(pts, p=p)
            by_position = order.scales[order.perm]
            assert np.all(np.isinf(by_position[-p:]))
            assert np.all(np.isfinite(by_position[:-p]))
            assert np.all(by_position[:-p] > 0)

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        pts = rng.uniform(size=(50, 3))
        a = reverse_maximin(pts, p=2)
        b = reverse_maximin(pts, p=2)
        np.testing.assert_array_equal(a.perm, b.perm)
        np.testing.assert_array_equal(a.scales, b.scales)

    def test_default_seed_is_central(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 0.1], [0.0, 10.0]])
        order = reverse_maximin(pts)
        assert order.perm[-1] == 2  # closest to the coordinate-wise mean

    def test_ordering_validates_perm(self):
        with pytest.raises(ValueError):
            Ordering(perm=np.array([0, 0, 2]), scales=np.ones(3))


class TestCandidates:
    def _setup(self, seed=21, n=30):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(size=(n, 2))
        return pts, reverse_maximin(pts, p=1)

    def test_triangularity(self):
        pts, order = self._setup()
        for i in range(len(pts)):
            for cand in (rho_ball_candidates(order, pts, i, 2.0),
                         knn_candidates(order, pts, i, 5)):
                assert np.all(order.rank[cand] > order.rank[i])

    def test_rho_ball_matches_linear_scan(self):
        pts, order = self._setup()
        for i in range(len(pts)):
            got = rho_ball_candidates(order, pts, i, 1.7)
            succ = order.successors(i)
            keep = [j for j in succ
                    if np.sqrt(((pts[j] - pts[i]) ** 2).sum()) <= 1.7 * order.scales[i]]
            np.testing.assert_array_equal(got, keep)

    def test_tiny_radius_gives_empty_set(self):
        pts, order = self._setup()
        i = order.perm[0]
        d = np.linalg.norm(pts[order.successors(i)] - pts[i], axis=1).min()
        got = rho_ball_candidates(order, pts, i, 0.5 * d / order.scales[i])
        assert len(got) == 0

    def test_first_position_with_large_radius_sees_everyone(self):
        pts, order = self._setup()
        i = order.perm[0]
        got = rho_ball_candidates(order, pts, i, 1e9)
        assert len(got) == len(pts) - 1

    def test_knn_matches_full_sort(self):
        pts, order = self._setup(seed=22)
        for i in range(len(pts)):
            for k in (1, 5, 50):
                got = knn_candidates(order, pts, i, k)
                succ = order.successors(i)
                d = np.linalg.norm(pts[succ] - pts[i], axis=1)
                expect = succ[np.lexsort((succ, d))[:k]]
                np.testing.assert_array_equal(sorted(got), sorted(expect))

    def test_knn_hand_case(self):
        pts = np.array([[0.0], [1.0], [3.0]])
        order = Ordering(perm=np.array([0, 1, 2]), scales=np.array([1.0, 1.0, np.inf]))
        np.testing.assert_array_equal(knn_candidates(order, pts, 0, 1), [1])

    def test_knn_exhausts_successors(self):
        pts, order = self._setup(seed=23, n=8)
        i = order.perm[5]
        got = knn_candidates(order, pts, i, 10)
        np.testing.assert_array_equal(got, order.successors(i))
