import gc

import numpy as np
import pytest
import scipy.sparse as sp

from config import settings
from graph_core.bipartite import BipartiteGraph, Layer
from graph_core.loaders import RatingTable
from recommender.ranking import RankedList, rank_row, top_n, write_ranked_lists
from recommender.ratings import predict_ratings
from recommender.scoring import (ScoreMatrix, ScoreMode, preferential_attachment_scores, score_hybrid,
                                 score_item_based, score_user_based)
from similarity.kernels import Metric
from similarity.matrix import BlockedSimilarity, SimilarityMatrix, similarity_matrix
from utils.errors import DataError


def naive_user_scores(B: np.ndarray, M: np.ndarray) -> np.ndarray:
    n_users, n_items = M.shape
    S = np.zeros((n_users, n_items))
    for i in range(n_users):
        denominator = sum(abs(B[i, l]) for l in range(n_users))
        if denominator == 0:
            continue
        for alpha in range(n_items):
            S[i, alpha] = sum(B[i, l] * M[l, alpha] for l in range(n_users)) / denominator
    return S


def naive_item_scores(B: np.ndarray, M: np.ndarray) -> np.ndarray:
    n_users, n_items = M.shape
    S = np.zeros((n_users, n_items))
    for alpha in range(n_items):
        denominator = sum(abs(B[alpha, lam]) for lam in range(n_items))
        if denominator == 0:
            continue
        for i in range(n_users):
            S[i, alpha] = sum(B[alpha, lam] * M[i, lam] for lam in range(n_items)) / denominator
    return S


def fixed_similarity(layer: Layer, dense) -> SimilarityMatrix:
    return SimilarityMatrix(layer=layer, metric=Metric.SAPLING, values=sp.csr_matrix(np.asarray(dense, dtype=float)))


@pytest.fixture
def small_graph(random_graph):
    return random_graph(50, 50, 0.15, seed=21)


class TestUserBased:
    def test_identical_users_transfer_items(self):
        g = BipartiteGraph.from_edges([0, 1, 1], [0, 0, 1])
        B = fixed_similarity(Layer.USERS, [[0, 1], [1, 0]])
        S = score_user_based(B, g)
        assert S.values[0, 1] == 1.0

    def test_zero_row_scores_zero(self):
        g = BipartiteGraph.from_edges([0, 1], [0, 1])
        B = fixed_similarity(Layer.USERS, [[0, 0], [0, 1]])
        assert not score_user_based(B, g).values[0].any()

    def test_negative_neighbour(self):
        g = BipartiteGraph.from_edges([1], [0], n_users=2, n_items=1)
        B = fixed_similarity(Layer.USERS, [[0, -1], [-1, 0]])
        assert score_user_based(B, g).values[0, 0] == -1.0

    @pytest.mark.parametrize("metric", [Metric.SAPLING, Metric.JACCARD, Metric.PROBS])
    def test_matches_triple_loop(self, small_graph, metric):
        B = similarity_matrix(small_graph, Layer.USERS, metric)
        S = score_user_based(B, small_graph, block_size=8, workers=4)
        expected = naive_user_scores(B.to_dense(), small_graph.user_rows.toarray())
        np.testing.assert_allclose(S.values, expected, rtol=0, atol=1e-12)

    def test_streamed_similarity_gives_same_scores(self, small_graph):
        stored = score_user_based(similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        streamed = score_user_based(BlockedSimilarity(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        np.testing.assert_allclose(stored.values, streamed.values, rtol=0, atol=1e-12)

    def test_exclude_self(self):
        g = BipartiteGraph.from_edges([0, 1], [0, 1])
        B = fixed_similarity(Layer.USERS, [[1, 0.5], [0.5, 1]])
        assert score_user_based(B, g, include_self=False).values[0].tolist() == [0.0, 1.0]
        assert score_user_based(B, g, include_self=True).values[0].tolist() == pytest.approx([1 / 1.5, 0.5 / 1.5])

    def test_scores_bounded(self, small_graph):
        S = score_user_based(similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        assert np.abs(S.values).max() <= 1.0 + 1e-12

    def test_positive_row_scaling_is_invisible(self, small_graph):
        B = similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING)
        scaled = SimilarityMatrix(layer=B.layer, metric=B.metric, values=B.values * 7.3)
        np.testing.assert_allclose(score_user_based(scaled, small_graph).values,
                                   score_user_based(B, small_graph).values, rtol=0, atol=1e-12)

    def test_dimension_mismatch(self, small_graph):
        with pytest.raises(DataError):
            score_user_based(fixed_similarity(Layer.USERS, np.eye(3)), small_graph)
        with pytest.raises(DataError):
            score_user_based(similarity_matrix(small_graph, Layer.ITEMS, Metric.SAPLING), small_graph)

    def test_large_scores_go_to_disk(self, small_graph, monkeypatch, tmp_path):
        in_memory = score_user_based(similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        monkeypatch.setattr(settings, "memmap_threshold_mb", 0)
        monkeypatch.setattr(settings, "scratch_dir", tmp_path)
        S = score_user_based(similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        assert isinstance(S.values, np.memmap)
        np.testing.assert_array_equal(np.asarray(S.values), in_memory.values)

    def test_disk_backed_run_leaves_no_scratch_files(self, small_graph, monkeypatch, tmp_path):
        monkeypatch.setattr(settings, "memmap_threshold_mb", 0)
        monkeypatch.setattr(settings, "scratch_dir", tmp_path)
        S_user = score_user_based(similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        S_item = score_item_based(similarity_matrix(small_graph, Layer.ITEMS, Metric.SAPLING), small_graph)
        S = score_hybrid(S_user, S_item, 0.5)
        assert S.values[0].shape == (small_graph.n_items,)
        del S, S_user, S_item
        gc.collect()
        assert not list(tmp_path.glob("scores-*.npy"))


class TestItemBased:
    def test_matches_triple_loop(self, small_graph):
        B = similarity_matrix(small_graph, Layer.ITEMS, Metric.SAPLING)
        S = score_item_based(B, small_graph, block_size=8, workers=4)
        expected = naive_item_scores(B.to_dense(), small_graph.user_rows.toarray())
        np.testing.assert_allclose(S.values, expected, rtol=0, atol=1e-12)

    def test_item_identical_to_a_held_one(self):
        g = BipartiteGraph.from_edges([0], [0], n_users=1, n_items=2)
        B = fixed_similarity(Layer.ITEMS, [[0, 1], [1, 0]])
        assert score_item_based(B, g).values[0, 1] == 1.0

    def test_empty_user_scores_zero(self, small_graph):
        users, items = small_graph.edges()
        keep = users != 0
        g = BipartiteGraph.from_edges(users[keep], items[keep], n_users=small_graph.n_users,
                                      n_items=small_graph.n_items)
        S = score_item_based(similarity_matrix(g, Layer.ITEMS, Metric.SAPLING), g)
        assert not S.values[0].any()

    def test_transpose_duality(self, small_graph):
        items = score_item_based(similarity_matrix(small_graph, Layer.ITEMS, Metric.SAPLING), small_graph)
        flipped = small_graph.transposed()
        users = score_user_based(similarity_matrix(flipped, Layer.USERS, Metric.SAPLING), flipped)
        np.testing.assert_allclose(items.values, users.values.T, rtol=0, atol=1e-12)


class TestHybrid:
    @pytest.fixture
    def both(self, small_graph):
        S_user = score_user_based(similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        S_item = score_item_based(similarity_matrix(small_graph, Layer.ITEMS, Metric.SAPLING), small_graph)
        return S_user, S_item

    def test_endpoints(self, both):
        S_user, S_item = both
        assert np.array_equal(score_hybrid(S_user, S_item, 0.0).values, S_user.values)
        assert np.array_equal(score_hybrid(S_user, S_item, 1.0).values, S_item.values)

    def test_affine_in_gamma(self, both):
        S_user, S_item = both
        for gamma in (0.2, 0.5, 0.8):
            hybrid = score_hybrid(S_user, S_item, gamma)
            assert np.array_equal(hybrid.values, S_user.values + gamma * (S_item.values - S_user.values))
            assert hybrid.mode is ScoreMode.HYBRID

    def test_matches_triple_loop(self, small_graph, both):
        B_user = similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING).to_dense()
        B_item = similarity_matrix(small_graph, Layer.ITEMS, Metric.SAPLING).to_dense()
        M = small_graph.user_rows.toarray()
        expected = 0.2 * naive_user_scores(B_user, M) + 0.8 * naive_item_scores(B_item, M)
        np.testing.assert_allclose(score_hybrid(*both, 0.8).values, expected, rtol=0, atol=1e-12)

    def test_gamma_range(self, both):
        with pytest.raises(ValueError):
            score_hybrid(*both, 1.2)


class TestPopularity:
    def test_product_of_degrees(self):
        g = BipartiteGraph.from_edges([0, 0, 1], [0, 1, 0], n_users=3, n_items=2)
        S = preferential_attachment_scores(g)
        assert S.values.tolist() == [[4.0, 2.0], [2.0, 1.0], [0.0, 0.0]]


class TestRanking:
    def test_rank_row_ties_to_smaller_index(self):
        assert rank_row(np.array([0.1, 0.5, 0.5, 0.9]), np.array([], dtype=int), 3).tolist() == [3, 1, 2]

    def test_train_items_excluded(self, small_graph):
        S = score_user_based(similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        for ranked in top_n(S, small_graph, n=10):
            held = set(small_graph.neighbors(Layer.USERS, ranked.user).tolist())
            assert not held & set(ranked.items.tolist())
            assert np.all(np.diff(ranked.scores) <= 0)
            assert len(set(ranked.items.tolist())) == len(ranked)

    def test_full_row_gives_empty_list(self):
        g = BipartiteGraph.from_edges([0, 0], [0, 1])
        S = ScoreMatrix(values=np.ones((1, 2)), mode=ScoreMode.USER)
        assert len(top_n(S, g, n=5)[0]) == 0

    def test_short_candidate_list(self):
        g = BipartiteGraph.from_edges([0], [0], n_users=1, n_items=4)
        S = ScoreMatrix(values=np.array([[0.0, 0.1, 0.3, 0.2]]), mode=ScoreMode.USER)
        assert top_n(S, g, n=20)[0].items.tolist() == [2, 3, 1]

    def test_same_lists_for_any_worker_count(self, small_graph):
        S = score_user_based(similarity_matrix(small_graph, Layer.USERS, Metric.SAPLING), small_graph)
        one = top_n(S, small_graph, n=20, workers=1)
        many = top_n(S, small_graph, n=20, workers=8)
        assert [r.items.tolist() for r in one] == [r.items.tolist() for r in many]

    def test_writers(self, tmp_path):
        lists = [RankedList(0, np.array([3, 1]), np.array([0.9, 0.5])), RankedList(1, np.array([], dtype=int), np.array([]))]
        write_ranked_lists(lists, tmp_path / "r.txt")
        assert (tmp_path / "r.txt").read_text().splitlines() == ["0: 3 1", "1:"]
        write_ranked_lists(lists, tmp_path / "r.csv", fmt="csv")
        assert (tmp_path / "r.csv").read_text().splitlines() == ["user,rank,item,score", "0,1,3,0.9", "0,2,1,0.5"]


class TestPredictRatings:
    def test_single_rater(self):
        table = RatingTable(users=np.array([1]), items=np.array([0]), ratings=np.array([4.0]), n_users=2, n_items=1)
        B = fixed_similarity(Layer.USERS, [[1, 0.6], [0.6, 1]])
        assert predict_ratings(B, table, [(0, 0)]).tolist() == [4.0]

    def test_equal_weights_give_plain_mean(self):
        table = RatingTable(users=np.array([1, 2, 3]), items=np.array([0, 0, 0]), ratings=np.array([2.0, 3.0, 5.0]),
                            n_users=4, n_items=1)
        B = fixed_similarity(Layer.USERS, np.full((4, 4), 0.5))
        assert predict_ratings(B, table, [(0, 0)])[0] == pytest.approx(10 / 3)

    def test_no_neighbour_falls_back_to_global_mean(self):
        table = RatingTable(users=np.array([1, 1]), items=np.array([0, 1]), ratings=np.array([2.0, 4.0]),
                            n_users=2, n_items=2)
        B = fixed_similarity(Layer.USERS, [[1, 0], [0, 1]])
        assert predict_ratings(B, table, [(0, 0)]).tolist() == [3.0]

    def test_item_mode(self):
        table = RatingTable(users=np.array([0, 0]), items=np.array([1, 2]), ratings=np.array([5.0, 1.0]),
                            n_users=1, n_items=3)
        B = fixed_similarity(Layer.ITEMS, [[1, 0.75, 0.25], [0.75, 1, 0], [0.25, 0, 1]])
        assert predict_ratings(B, table, [(0, 0)], mode="item")[0] == pytest.approx(4.0)

    def test_bounded_by_train_range_with_positive_weights(self, random_graph):
        rng = np.random.default_rng(5)
        g = random_graph(30, 40, 0.2, seed=22)
        users, items = g.edges()
        table = RatingTable(users=users, items=items, ratings=rng.integers(1, 6, users.size).astype(float),
                            n_users=g.n_users, n_items=g.n_items)
        B = similarity_matrix(g, Layer.USERS, Metric.JACCARD)
        targets = [(u, i) for u in range(g.n_users) for i in range(0, g.n_items, 3)]
        predicted = predict_ratings(B, table, targets, block_size=7, workers=3)
        assert predicted.min() >= table.ratings.min() - 1e-9
        assert predicted.max() <= table.ratings.max() + 1e-9

    def test_target_out_of_range(self):
        table = RatingTable(users=np.array([0]), items=np.array([0]), ratings=np.array([3.0]), n_users=1, n_items=1)
        with pytest.raises(DataError, match="out of range"):
            predict_ratings(fixed_similarity(Layer.USERS, [[1]]), table, [(0, 4)])
