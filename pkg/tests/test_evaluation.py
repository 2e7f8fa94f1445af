import json
import math

import numpy as np
import pandas as pd
import pytest

from config import RunConfig
from evaluation.benchmark import REPRODUCTION_NOTE, run_benchmark
from evaluation.metrics import (dcg, evaluate_rankings, mae_rmse, ndcg_at_k, precision_at_k, rating_ndcg,
                                recall_at_k)
from evaluation.report import EvalReport, GammaPoint, distribution, write_gamma_curve
from evaluation.tuning import tune_gamma
from graph_core.bipartite import BipartiteGraph, Layer
from graph_core.loaders import load_split_pair, write_edge_list
from graph_core.split import holdout_validation_split
from recommender.ranking import RankedList
from similarity.kernels import Metric
from similarity.sapling import sapling_value
from utils.errors import ConfigError


def ranked(user, items):
    items = np.asarray(items, dtype=np.int64)
    return RankedList(user=user, items=items, scores=np.zeros(items.size))


def naive_metrics(S: np.ndarray, train: BipartiteGraph, test: BipartiteGraph, k: int):
    precision, recall, ndcg = [], [], []
    for u in range(train.n_users):
        relevant = set(test.neighbors(Layer.USERS, u).tolist())
        if not relevant:
            continue
        seen = set(train.neighbors(Layer.USERS, u).tolist())
        candidates = [a for a in range(train.n_items) if a not in seen]
        top = sorted(candidates, key=lambda a: (-S[u, a], a))[:k]
        hits = [a in relevant for a in top]
        precision.append(sum(hits) / k)
        recall.append(sum(hits) / len(relevant))
        gain = sum(1 / math.log2(pos + 2) for pos, hit in enumerate(hits) if hit)
        ideal = sum(1 / math.log2(pos + 2) for pos in range(min(k, len(relevant))))
        ndcg.append(gain / ideal)
    return np.mean(precision), np.mean(recall), np.mean(ndcg)


def naive_sapling(M: np.ndarray) -> np.ndarray:
    """Sapling similarity between the rows of a 0/1 matrix, pair by pair."""
    n, universe = M.shape
    k = M.sum(axis=1)
    return np.array([[sapling_value(universe, k[i], k[j], int(M[i] @ M[j])) for j in range(n)] for i in range(n)])


def naive_scores(M: np.ndarray, mode: str, gamma=None) -> np.ndarray:
    n_users, n_items = M.shape
    if mode == "hybrid":
        S_user, S_item = naive_scores(M, "user"), naive_scores(M, "item")
        return S_user + gamma * (S_item - S_user)
    B = naive_sapling(M if mode == "user" else M.T)
    S = np.zeros((n_users, n_items))
    for i in range(n_users):
        for alpha in range(n_items):
            if mode == "user":
                weights, holds = B[i], M[:, alpha]
            else:
                weights, holds = B[alpha], M[i]
            denominator = sum(abs(w) for w in weights)
            if denominator:
                S[i, alpha] = sum(w * h for w, h in zip(weights, holds)) / denominator
    return S


@pytest.fixture
def split_files(tmp_path, random_graph):
    g = random_graph(30, 40, 0.25, seed=8)
    split = holdout_validation_split(g, fraction=0.2, seed=1)
    write_edge_list(split.train, tmp_path / "train.txt")
    write_edge_list(split.heldout, tmp_path / "test.txt")
    return tmp_path / "train.txt", tmp_path / "test.txt"


def run_config(split_files, tmp_path, **values) -> RunConfig:
    train_path, test_path = split_files
    base = dict(dataset="toy", train_path=train_path, test_path=test_path, mode="user", k=10,
                block_size=8, workers=2, output_dir=tmp_path / "results")
    base.update(values)
    return RunConfig(**base)


class TestRankingMetrics:
    def test_precision(self):
        items = list(range(10))
        assert precision_at_k(items, {3}, k=10) == 0.1
        assert precision_at_k(items, {42}, k=10) == 0.0
        assert precision_at_k(items, set(items), k=10) == 1.0

    def test_precision_divides_by_k_for_short_lists(self):
        assert precision_at_k([1, 2], {1, 2}, k=10) == 0.2

    def test_recall(self):
        assert recall_at_k([1, 2, 3], {1, 2}, k=3) == 1.0
        assert recall_at_k([1, 2, 3], {1, 7, 8, 9}, k=3) == 0.25
        assert recall_at_k([1, 2, 3], {1, 2, 9}, k=3) == pytest.approx(2 / 3)

    def test_recall_needs_relevant_items(self):
        with pytest.raises(ValueError):
            recall_at_k([1], set(), k=1)

    def test_ndcg(self):
        assert ndcg_at_k([4, 5], {4}, k=2) == 1.0
        assert ndcg_at_k([5, 4], {4}, k=2) == pytest.approx(1 / math.log2(3))
        assert ndcg_at_k([5, 6], {4}, k=2) == 0.0

    def test_ideal_cut_at_k(self):
        assert ndcg_at_k([1, 2], {1, 2, 3, 4, 5}, k=2) == pytest.approx(1.0)

    def test_order_beyond_k_is_ignored(self):
        head = [3, 9, 1]
        assert ndcg_at_k(head + [4, 7, 8], {1, 7}, k=3) == ndcg_at_k(head + [8, 4, 7], {1, 7}, k=3)

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            precision_at_k([1], {1}, k=0)

    def test_dcg_of_ones(self):
        assert dcg(np.ones(2)) == pytest.approx(1 + 1 / math.log2(3))


class TestRatingMetrics:
    def test_mae_rmse(self):
        assert mae_rmse([1, 2], [1, 2]) == (0.0, 0.0)
        assert mae_rmse([2, 3], [1, 2]) == (1.0, 1.0)
        mae, rmse = mae_rmse([0, 2], [0, 0])
        assert mae == 1.0
        assert rmse == pytest.approx(math.sqrt(2))

    def test_mae_rmse_rejects_bad_input(self):
        with pytest.raises(ValueError):
            mae_rmse([], [])
        with pytest.raises(ValueError):
            mae_rmse([1, 2], [1])

    def test_rating_ndcg(self):
        users = [0, 0, 0]
        assert rating_ndcg(users, [3.0, 2.0, 1.0], [5.0, 3.0, 1.0]) == pytest.approx(1.0)
        assert rating_ndcg(users, [1.0, 2.0, 3.0], [5.0, 3.0, 1.0]) < 1.0

    def test_rating_ndcg_averages_users(self):
        value = rating_ndcg([0, 0, 1, 1], [2.0, 1.0, 2.0, 1.0], [4.0, 2.0, 2.0, 4.0])
        worst = (2 + 4 / math.log2(3)) / (4 + 2 / math.log2(3))
        assert value == pytest.approx((1.0 + worst) / 2)


class TestEvaluateRankings:
    def test_empty_test_users_are_skipped(self):
        test = BipartiteGraph.from_edges([0], [1], n_users=2, n_items=3)
        metrics = evaluate_rankings([ranked(0, [1, 2]), ranked(1, [0, 1])], test, k=2)
        assert metrics.n_evaluated == 1
        assert metrics.skipped == 1
        assert metrics.means()["precision"] == 0.5

    def test_counts_agree(self, random_graph):
        test = random_graph(40, 30, 0.2, seed=6)
        rng = np.random.default_rng(0)
        lists = [ranked(u, rng.permutation(30)[:10]) for u in range(40)]
        metrics = evaluate_rankings(lists, test, k=10)
        np.testing.assert_allclose(metrics.precision * 10, metrics.hits, atol=1e-12)
        np.testing.assert_allclose(metrics.recall * metrics.n_relevant, metrics.hits, atol=1e-12)

    def test_duplicated_population_keeps_means(self, random_graph):
        test = random_graph(20, 25, 0.3, seed=2)
        rng = np.random.default_rng(1)
        lists = [ranked(u, rng.permutation(25)[:5]) for u in range(20)]
        once = evaluate_rankings(lists, test, k=5).means()
        twice = evaluate_rankings(lists + lists, test, k=5).means()
        for key in once:
            assert twice[key] == pytest.approx(once[key], abs=1e-12)

    def test_frame_columns(self, tiny_graph):
        frame = evaluate_rankings([ranked(0, [0])], tiny_graph, k=1).to_frame()
        assert list(frame.columns) == ["user", "relevant", "hits", "precision", "recall", "ndcg"]


class TestReport:
    def test_distribution(self):
        summary = distribution(np.array([0.0, 1.0]))
        assert summary["mean"] == 0.5
        assert summary["q50"] == 0.5
        assert set(summary) == {"mean", "std", "min", "max", "q10", "q25", "q50", "q75", "q90"}
        assert distribution(np.zeros(0)) == {}

    def test_body_leaves_out_run_dependent_fields(self):
        report = EvalReport(dataset="d", task="ranking", mode="hybrid", metric="sapling", gamma=0.5, k=20,
                            seed=0, n_evaluated=3, aggregates={"ndcg@20": 0.1}, timing={"total_seconds": 1.0},
                            per_user=pd.DataFrame({"user": [0]}))
        body = json.loads(report.body())
        assert "timing" not in body
        assert "per_user" not in body
        assert report.stem == "d_sapling_hybrid_0.5"

    def test_gamma_curve_csv(self, tmp_path):
        write_gamma_curve([GammaPoint(gamma=0.0, ndcg=0.5), GammaPoint(gamma=1.0, ndcg=0.25)], tmp_path / "g.csv")
        frame = pd.read_csv(tmp_path / "g.csv")
        assert frame.to_dict("list") == {"gamma": [0.0, 1.0], "ndcg": [0.5, 0.25]}


class TestTuneGamma:
    def test_best_is_the_argmax(self, random_graph):
        g = random_graph(30, 40, 0.25, seed=12)
        curve = tune_gamma(g, Metric.SAPLING, grid=(0.0, 1.0), seed=3, k=10, block_size=8, workers=2)
        assert [p.gamma for p in curve.points] == [0.0, 1.0]
        assert curve.best_ndcg == max(p.ndcg for p in curve.points)

    def test_ties_go_to_the_smaller_gamma(self):
        # every user holds five items of their own; the held-out item is unseen in
        # the reduced train, so its score is zero on both sides and the ranking never changes
        users = np.repeat(np.arange(10), 5)
        items = np.arange(50)
        g = BipartiteGraph.from_edges(users, items)
        curve = tune_gamma(g, Metric.SAPLING, grid=(1.0, 0.5, 0.0), fraction=0.1, k=20)
        assert len({p.ndcg for p in curve.points}) == 1
        assert curve.best_gamma == 0.0

    def test_users_without_train_edges_are_skipped(self, random_graph):
        g = random_graph(30, 40, 0.25, seed=12)
        users, items = g.edges()
        lonely = BipartiteGraph.from_edges(np.append(users, 30), np.append(items, 0), n_users=31, n_items=40)
        curve = tune_gamma(lonely, Metric.SAPLING, grid=(0.0, 1.0), k=10)
        assert curve.n_skipped >= 1

    def test_independent_of_workers(self, random_graph):
        g = random_graph(30, 40, 0.25, seed=12)
        one = tune_gamma(g, Metric.JACCARD, grid=(0.0, 0.5, 1.0), block_size=4, workers=1)
        many = tune_gamma(g, Metric.JACCARD, grid=(0.0, 0.5, 1.0), block_size=4, workers=8)
        assert one.points == many.points

    def test_grid_is_checked(self, tiny_graph):
        with pytest.raises(ValueError):
            tune_gamma(tiny_graph, Metric.SAPLING, grid=(1.5,))
        with pytest.raises(ValueError):
            tune_gamma(tiny_graph, Metric.SAPLING, grid=())


class TestRunBenchmark:
    @pytest.mark.parametrize("mode, gamma", [("user", None), ("item", None), ("hybrid", 0.4)])
    def test_matches_naive_evaluator(self, split_files, tmp_path, mode, gamma):
        config = run_config(split_files, tmp_path, mode=mode, gamma=gamma)
        report = run_benchmark(config, write=False)
        train, test = load_split_pair(*split_files)
        S = naive_scores(train.user_rows.toarray(), mode, gamma)
        precision, recall, ndcg = naive_metrics(S, train, test, k=10)
        assert report.aggregates["precision@10"] == pytest.approx(precision, abs=1e-12)
        assert report.aggregates["recall@10"] == pytest.approx(recall, abs=1e-12)
        assert report.aggregates["ndcg@10"] == pytest.approx(ndcg, abs=1e-12)

    def test_report_body_is_deterministic(self, split_files, tmp_path):
        first = run_benchmark(run_config(split_files, tmp_path, mode="hybrid", gamma=0.5, workers=1), write=False)
        again = run_benchmark(run_config(split_files, tmp_path, mode="hybrid", gamma=0.5, workers=1), write=False)
        parallel = run_benchmark(run_config(split_files, tmp_path, mode="hybrid", gamma=0.5, workers=8), write=False)
        assert first.body() == again.body() == parallel.body()

    def test_report_files(self, split_files, tmp_path):
        config = run_config(split_files, tmp_path)
        run_benchmark(config)
        out = tmp_path / "results"
        for suffix in (".report", ".users.csv", ".timing.json", ".ranked.txt"):
            assert (out / f"toy_sapling_user_0{suffix}").is_file()
        body = json.loads((out / "toy_sapling_user_0.report").read_text())
        assert body["conventions"]["precision_denominator"] == "k"
        assert "workers" not in body["config"]

    def test_popularity_report_name(self, split_files, tmp_path):
        report = run_benchmark(run_config(split_files, tmp_path, mode="popularity"))
        assert report.stem == "toy_preferential_attachment_popularity_na"
        assert report.gamma is None

    def test_tuned_hybrid_writes_curve(self, split_files, tmp_path):
        report = run_benchmark(run_config(split_files, tmp_path, mode="hybrid", tune_grid=[0.0, 1.0]))
        assert [p.gamma for p in report.gamma_curve] == [0.0, 1.0]
        assert report.gamma in (0.0, 1.0)
        assert (tmp_path / "results" / f"{report.stem}.gamma.csv").is_file()

    def test_exported_similarity(self, split_files, tmp_path):
        run_benchmark(run_config(split_files, tmp_path, export_similarity=True))
        assert (tmp_path / "results" / "toy_sapling.users.sim").is_file()


@pytest.fixture
def ratings_file(write_lines):
    day = 86_400
    rng = np.random.default_rng(5)
    lines = ["user,item,rating,timestamp"]
    for u in range(12):
        for i in rng.choice(15, size=8, replace=False):
            lines.append(f"u{u},m{i},{int(rng.integers(1, 6))},{int(rng.integers(0, 10)) * day}")
    return write_lines("ratings.csv", lines)


def rating_config(ratings_file, tmp_path, **values) -> RunConfig:
    base = dict(dataset="ml", task="rating", raw_path=ratings_file, ingestion="ratings", mode="user",
                metric="jaccard", temporal_cutoff_days=6, output_dir=tmp_path / "results")
    base.update(values)
    return RunConfig(**base)


class TestRatingTask:
    def test_report(self, ratings_file, tmp_path):
        report = run_benchmark(rating_config(ratings_file, tmp_path))
        assert set(report.aggregates) == {"mae", "rmse", "rating_ndcg"}
        assert 0.0 <= report.aggregates["mae"] <= report.aggregates["rmse"]
        assert REPRODUCTION_NOTE in report.notes
        assert report.gamma == 0.0
        assert (tmp_path / "results" / "ml_jaccard_user_0.report").is_file()

    def test_hybrid_needs_fixed_gamma(self, ratings_file, tmp_path):
        with pytest.raises(ConfigError):
            run_benchmark(rating_config(ratings_file, tmp_path, mode="hybrid", tune_grid=[0.5]))

    def test_hybrid_with_gamma(self, ratings_file, tmp_path):
        report = run_benchmark(rating_config(ratings_file, tmp_path, mode="hybrid", gamma=0.5), write=False)
        assert report.stem == "ml_jaccard_hybrid_0.5"

    def test_popularity_is_rejected(self, ratings_file, tmp_path):
        with pytest.raises(ConfigError):
            run_benchmark(rating_config(ratings_file, tmp_path, mode="popularity"))
