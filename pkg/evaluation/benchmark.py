"""End-to-end benchmark runs: load, score, rank, evaluate, persist."""
import logging
import time
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from config import IngestionKind, RunConfig, Task
from evaluation.metrics import evaluate_rankings, mae_rmse, rating_ndcg
from evaluation.report import EvalReport, ranking_report, write_gamma_curve, write_report
from evaluation.tuning import GammaCurve, tune_gamma
from graph_core.bipartite import BipartiteGraph, Layer
from graph_core.filters import filter_min_degree
from graph_core.loaders import (RatingTable, load_edge_list, load_export_csv, load_ratings_csv,
                                load_split_pair, rca_binarize, threshold_ratings)
from graph_core.split import holdout_validation_split, temporal_split
from recommender.ranking import top_n, write_ranked_lists
from recommender.ratings import predict_ratings
from recommender.scoring import (ScoreMatrix, ScoreMode, preferential_attachment_scores, score_hybrid,
                                 score_item_based, score_user_based)
from similarity.io import write_similarity_binary
from similarity.kernels import Metric
from similarity.matrix import BlockedSimilarity, SimilaritySource
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

REPRODUCTION_NOTE = (
    "rating-prediction reproduction is best-effort: the dataset version and "
    "the day boundary of the temporal split are not pinned down"
)


def ingest_graph(
    kind: IngestionKind,
    path: Path,
    input_format: str = "adjacency",
    rca_threshold: float = 1.0,
    min_rating: float = 3.0,
    min_degree: int = 0,
) -> BipartiteGraph:
    """Turn one raw input file into a (degree-filtered) bipartite graph."""
    kind = IngestionKind(kind)
    if kind is IngestionKind.EDGES:
        g = load_edge_list(path, format=input_format)
    elif kind is IngestionKind.RCA:
        volumes, countries, products = load_export_csv(path)
        g = rca_binarize(volumes, rca_threshold, country_labels=countries, product_labels=products)
    else:
        g = threshold_ratings(load_ratings_csv(path), min_rating)
    return filter_min_degree(g, min_degree)


def load_graphs(config: RunConfig) -> Tuple[BipartiteGraph, BipartiteGraph]:
    """Train and test graphs of a ranking run.

    A given train/test pair is used as is. Otherwise the single input graph
    is degree-filtered and split with ``test_fraction`` of every user's items
    held out.
    """
    if config.train_path is not None and config.test_path is not None:
        if config.min_degree:
            logger.warning("min_degree is ignored for a predefined train/test split")
        return load_split_pair(config.train_path, config.test_path, config.input_format)

    if config.train_path is not None:
        g = filter_min_degree(load_edge_list(config.train_path, format=config.input_format), config.min_degree)
    else:
        g = ingest_graph(config.ingestion, config.raw_path, config.input_format,
                         config.rca_threshold, config.min_rating, config.min_degree)
    split = holdout_validation_split(g, fraction=config.test_fraction, seed=config.seed)
    return split.train, split.heldout


def _similarity(train: BipartiteGraph, layer: Layer, config: RunConfig, export_stem: Optional[str]) -> SimilaritySource:
    source = BlockedSimilarity(train, layer, Metric(config.metric), topk=config.topk)
    if not config.export_similarity or export_stem is None:
        return source
    matrix = source.materialize(config.block_size, config.workers)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    write_similarity_binary(matrix, config.output_dir / f"{export_stem}.{layer.value}.sim")
    return matrix


def build_scores(
    config: RunConfig,
    train: BipartiteGraph,
    export_stem: Optional[str] = None,
) -> Tuple[ScoreMatrix, Optional[GammaCurve]]:
    """Score matrix of the configured mode; hybrid runs tune γ when a grid is given."""
    mode = ScoreMode(config.mode)
    if mode is ScoreMode.POPULARITY:
        return preferential_attachment_scores(train), None

    common = dict(include_self=config.include_self, block_size=config.block_size, workers=config.workers)
    if mode is ScoreMode.USER:
        return score_user_based(_similarity(train, Layer.USERS, config, export_stem), train, **common), None
    if mode is ScoreMode.ITEM:
        return score_item_based(_similarity(train, Layer.ITEMS, config, export_stem), train, **common), None

    curve = None
    gamma = config.gamma
    if gamma is None:
        curve = tune_gamma(train, Metric(config.metric), config.tune_grid, seed=config.seed,
                           fraction=config.test_fraction, k=config.k, topk=config.topk, **common)
        gamma = curve.best_gamma
    S_user = score_user_based(_similarity(train, Layer.USERS, config, export_stem), train, **common)
    S_item = score_item_based(_similarity(train, Layer.ITEMS, config, export_stem), train, **common)
    return score_hybrid(S_user, S_item, gamma, block_size=config.block_size), curve


def _report_gamma(scores: ScoreMatrix) -> Optional[float]:
    if scores.mode is ScoreMode.POPULARITY:
        return None
    return scores.gamma


def _run_ranking(config: RunConfig, timing: Dict[str, float]) -> EvalReport:
    began = time.perf_counter()
    train, test = load_graphs(config)
    timing["load_seconds"] = time.perf_counter() - began

    metric_name = config.metric if config.mode != "popularity" else "preferential_attachment"

    began = time.perf_counter()
    scores, curve = build_scores(config, train, export_stem=f"{config.dataset}_{metric_name}")
    timing["score_seconds"] = time.perf_counter() - began

    began = time.perf_counter()
    ranked = top_n(scores, train, n=config.k, exclude_train=config.exclude_train, workers=config.workers)
    metrics = evaluate_rankings(ranked, test, k=config.k)
    timing["evaluate_seconds"] = time.perf_counter() - began

    report = ranking_report(
        metrics,
        dataset=config.dataset,
        mode=config.mode,
        metric=metric_name,
        gamma=_report_gamma(scores),
        k=config.k,
        seed=config.seed,
        gamma_curve=curve.points if curve is not None else None,
        config=config.echo(),
    )
    if curve is not None and curve.n_skipped:
        report.notes.append(f"{curve.n_skipped} users had no train edges in the validation split")
    if config.export_rankings:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        write_ranked_lists(ranked, config.output_dir / f"{report.stem}.ranked.txt")
    if curve is not None:
        write_gamma_curve(curve.points, config.output_dir / f"{report.stem}.gamma.csv")
    return report


def _split_ratings(config: RunConfig, table: RatingTable) -> Tuple[RatingTable, RatingTable]:
    if config.temporal_cutoff_days is not None:
        return temporal_split(table, config.temporal_cutoff_days)
    rng = np.random.default_rng(config.seed)
    in_test = rng.random(len(table)) < config.test_fraction
    return table.subset(~in_test), table.subset(in_test)


def _run_rating(config: RunConfig, timing: Dict[str, float]) -> EvalReport:
    if config.raw_path is None or config.ingestion is not IngestionKind.RATINGS:
        raise ConfigError("the rating task needs 'raw_path' with ingestion = 'ratings'")
    mode = ScoreMode(config.mode)
    if mode is ScoreMode.POPULARITY or (mode is ScoreMode.HYBRID and config.gamma is None):
        raise ConfigError("the rating task supports user, item, or hybrid mode with a fixed gamma")

    began = time.perf_counter()
    train_table, test_table = _split_ratings(config, load_ratings_csv(config.raw_path))
    if len(test_table) == 0:
        raise DataError("the rating split left no test ratings")
    train = threshold_ratings(train_table, config.min_rating)
    targets = np.column_stack([test_table.users, test_table.items])
    timing["load_seconds"] = time.perf_counter() - began

    began = time.perf_counter()
    metric = Metric(config.metric)
    common = dict(block_size=config.block_size, workers=config.workers)
    predictions = {}
    for side, layer in ((ScoreMode.USER, Layer.USERS), (ScoreMode.ITEM, Layer.ITEMS)):
        if mode in (side, ScoreMode.HYBRID):
            source = BlockedSimilarity(train, layer, metric, topk=config.topk)
            predictions[side] = predict_ratings(source, train_table, targets, mode=side, **common)
    if mode is ScoreMode.HYBRID:
        gamma = config.gamma
        predicted = predictions[ScoreMode.USER] + gamma * (predictions[ScoreMode.ITEM] - predictions[ScoreMode.USER])
    else:
        predicted = predictions[mode]
    timing["predict_seconds"] = time.perf_counter() - began

    mae, rmse = mae_rmse(predicted, test_table.ratings)
    logger.warning(REPRODUCTION_NOTE)
    per_user = pd.DataFrame({
        "user": test_table.users,
        "item": test_table.items,
        "predicted": predicted,
        "actual": test_table.ratings,
    })
    return EvalReport(
        dataset=config.dataset,
        task=Task.RATING.value,
        mode=config.mode,
        metric=config.metric,
        gamma=config.effective_gamma,
        k=config.k,
        seed=config.seed,
        n_evaluated=int(np.unique(test_table.users).size),
        aggregates={
            "mae": mae,
            "rmse": rmse,
            "rating_ndcg": rating_ndcg(test_table.users, predicted, test_table.ratings),
        },
        conventions={"empty_neighbourhood": "global train mean", "train_ratings": "raw, including low ones"},
        notes=[REPRODUCTION_NOTE],
        config=config.echo(),
        per_user=per_user,
    )


def run_benchmark(config: RunConfig, write: bool = True) -> EvalReport:
    """Run one configured experiment and persist its report files."""
    config.validate_paths()
    began = time.perf_counter()
    timing: Dict[str, float] = {}
    if config.task is Task.RATING:
        report = _run_rating(config, timing)
    else:
        report = _run_ranking(config, timing)
    timing["total_seconds"] = time.perf_counter() - began
    report.timing = timing

    summary = ", ".join(f"{name}={value:.4f}" for name, value in report.aggregates.items())
    logger.info(f"{report.stem}: {summary} over {report.n_evaluated} users")
    if write:
        write_report(report, config.output_dir)
    return report
