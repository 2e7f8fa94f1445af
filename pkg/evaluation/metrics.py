"""Ranking and rating accuracy metrics."""
import logging
from dataclasses import dataclass
from typing import Collection, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from graph_core.bipartite import BipartiteGraph
from recommender.ranking import RankedList

logger = logging.getLogger(__name__)

Ranking = Union[RankedList, Sequence[int], np.ndarray]


def _items(ranked: Ranking) -> np.ndarray:
    if isinstance(ranked, RankedList):
        return ranked.items
    return np.asarray(ranked, dtype=np.int64)


def _hits(ranked: Ranking, relevant: Collection[int], k: int) -> np.ndarray:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    top = _items(ranked)[:k]
    return np.isin(top, np.fromiter(relevant, dtype=np.int64, count=len(relevant)))


def precision_at_k(ranked: Ranking, relevant: Collection[int], k: int = 20) -> float:
    """Hits in the top k divided by k, even when fewer than k items were ranked."""
    return float(_hits(ranked, relevant, k).sum()) / k


def recall_at_k(ranked: Ranking, relevant: Collection[int], k: int = 20) -> float:
    """Share of the relevant items found in the top k."""
    if not relevant:
        raise ValueError("recall is undefined for an empty relevant set")
    return float(_hits(ranked, relevant, k).sum()) / len(relevant)


def dcg(gains: np.ndarray) -> float:
    positions = np.arange(1, gains.size + 1)
    return float(np.sum(gains / np.log2(positions + 1)))


def ndcg_at_k(ranked: Ranking, relevant: Collection[int], k: int = 20) -> float:
    """Binary-relevance ndcg with the ideal ranking cut at min(k, |relevant|)."""
    if not relevant:
        raise ValueError("ndcg is undefined for an empty relevant set")
    hits = _hits(ranked, relevant, k).astype(np.float64)
    ideal = dcg(np.ones(min(k, len(relevant))))
    return dcg(hits) / ideal


def mae_rmse(predicted: Sequence[float], actual: Sequence[float]) -> Tuple[float, float]:
    """Mean absolute error and root mean squared error."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.size} predictions, {actual.size} actual values")
    if predicted.size == 0:
        raise ValueError("cannot score an empty prediction set")
    error = predicted - actual
    return float(np.mean(np.abs(error))), float(np.sqrt(np.mean(error ** 2)))


def rating_ndcg(
    users: Sequence[int],
    predicted: Sequence[float],
    actual: Sequence[float],
    k: Optional[int] = None,
) -> float:
    """Mean per-user ndcg of the order induced by predicted ratings, graded by actual ratings.

    Ties in the prediction are broken by input position. ``k`` cuts both the
    predicted and the ideal ranking; ``None`` ranks every rated item.
    """
    frame = pd.DataFrame({
        "user": np.asarray(users),
        "predicted": np.asarray(predicted, dtype=np.float64),
        "actual": np.asarray(actual, dtype=np.float64),
    })
    if frame.empty:
        raise ValueError("cannot score an empty prediction set")

    scores = []
    for _, group in frame.groupby("user", sort=True):
        by_prediction = group.sort_values("predicted", ascending=False, kind="stable")["actual"].to_numpy()
        ideal = np.sort(group["actual"].to_numpy())[::-1]
        if k is not None:
            by_prediction, ideal = by_prediction[:k], ideal[:k]
        best = dcg(ideal)
        if best > 0:
            scores.append(dcg(by_prediction) / best)
    return float(np.mean(scores)) if scores else 0.0


@dataclass(frozen=True, eq=False)
class UserMetrics:
    """Per-user ranking metrics of the evaluated users."""
    users: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    ndcg: np.ndarray
    hits: np.ndarray
    n_relevant: np.ndarray
    skipped: int

    @property
    def n_evaluated(self) -> int:
        return int(self.users.size)

    def means(self) -> dict:
        if self.n_evaluated == 0:
            return {"precision": 0.0, "recall": 0.0, "ndcg": 0.0}
        return {
            "precision": float(np.mean(self.precision)),
            "recall": float(np.mean(self.recall)),
            "ndcg": float(np.mean(self.ndcg)),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "user": self.users,
            "relevant": self.n_relevant,
            "hits": self.hits,
            "precision": self.precision,
            "recall": self.recall,
            "ndcg": self.ndcg,
        })


def evaluate_rankings(ranked: Iterable[RankedList], test: BipartiteGraph, k: int = 20) -> UserMetrics:
    """Score ranked lists against the test graph.

    Users with an empty test row are left out of every average and counted
    in ``skipped``.
    """
    rows = test.user_rows
    users, precision, recall, ndcg, hits, n_relevant = [], [], [], [], [], []
    skipped = 0
    for r in ranked:
        relevant = rows.indices[rows.indptr[r.user]:rows.indptr[r.user + 1]]
        if relevant.size == 0:
            skipped += 1
            continue
        relevant_set = set(relevant.tolist())
        hit_count = int(_hits(r, relevant_set, k).sum())
        users.append(r.user)
        hits.append(hit_count)
        n_relevant.append(relevant.size)
        precision.append(hit_count / k)
        recall.append(hit_count / relevant.size)
        ndcg.append(ndcg_at_k(r, relevant_set, k))

    if skipped:
        logger.info(f"{skipped} users without test items left out of the averages")
    return UserMetrics(
        users=np.asarray(users, dtype=np.int64),
        precision=np.asarray(precision, dtype=np.float64),
        recall=np.asarray(recall, dtype=np.float64),
        ndcg=np.asarray(ndcg, dtype=np.float64),
        hits=np.asarray(hits, dtype=np.int64),
        n_relevant=np.asarray(n_relevant, dtype=np.int64),
        skipped=skipped,
    )
