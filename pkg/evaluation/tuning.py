"""Grid search of the hybrid weight γ on a validation split of the train data."""
import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from config import settings
from evaluation.metrics import evaluate_rankings
from evaluation.report import GammaPoint
from graph_core.bipartite import BipartiteGraph, Layer
from graph_core.split import holdout_validation_split
from recommender.ranking import rank_rows
from recommender.scoring import hybrid_rows, score_item_based, score_user_based
from similarity.kernels import Metric
from similarity.matrix import BlockedSimilarity
from utils.parallel import block_ranges, ordered_map

logger = logging.getLogger(__name__)

DEFAULT_GRID = tuple(round(0.1 * step, 1) for step in range(11))


@dataclass(frozen=True)
class GammaCurve:
    """Validation ndcg for every γ of the grid and the best γ."""
    best_gamma: float
    points: List[GammaPoint]
    n_evaluated: int
    n_skipped: int

    @property
    def best_ndcg(self) -> float:
        return next(p.ndcg for p in self.points if p.gamma == self.best_gamma)


def tune_gamma(
    train: BipartiteGraph,
    metric: Metric,
    grid: Sequence[float] = DEFAULT_GRID,
    seed: int = 0,
    fraction: float = 0.10,
    k: int = 20,
    topk: Optional[int] = None,
    include_self: bool = True,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> GammaCurve:
    """Pick the γ maximising validation ndcg@k.

    The train graph is split again with ``holdout_validation_split``; both
    similarities are rebuilt on the reduced train and every γ is scored on
    the held-out part. Users left without train edges by the split are
    skipped. Ties go to the smaller γ.
    """
    grid = sorted(set(float(g) for g in grid))
    if not grid:
        raise ValueError("the gamma grid must not be empty")
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise ValueError(f"gamma grid values must lie in [0, 1], got {grid}")

    began = time.perf_counter()
    block_size = block_size or settings.block_size
    split = holdout_validation_split(train, fraction=fraction, seed=seed)
    reduced, heldout = split.train, split.heldout

    S_user = score_user_based(BlockedSimilarity(reduced, Layer.USERS, metric, topk=topk), reduced,
                              include_self=include_self, block_size=block_size, workers=workers)
    S_item = score_item_based(BlockedSimilarity(reduced, Layer.ITEMS, metric, topk=topk), reduced,
                              include_self=include_self, block_size=block_size, workers=workers)

    train_degree = np.diff(reduced.user_rows.indptr)
    heldout_degree = np.diff(heldout.user_rows.indptr)
    skipped = int(np.sum((train_degree == 0) & (heldout_degree > 0)))
    if skipped:
        logger.warning(f"{skipped} users have no train edges after the validation split and are skipped")

    def score_block(bounds):
        start, stop = bounds
        keep = train_degree[start:stop] > 0
        user_rows = np.asarray(S_user.values[start:stop])[keep]
        item_rows = np.asarray(S_item.values[start:stop])[keep]
        users = np.flatnonzero(keep) + start
        per_gamma = []
        for gamma in grid:
            rows = hybrid_rows(user_rows, item_rows, gamma)
            ranked = []
            for row, user in zip(rows, users):
                ranked.extend(rank_rows(row[None, :], int(user), reduced, k))
            per_gamma.append(evaluate_rankings(ranked, heldout, k).ndcg)
        return per_gamma

    collected: List[List[np.ndarray]] = [[] for _ in grid]
    for per_gamma in ordered_map(score_block, block_ranges(train.n_users, block_size), workers or settings.workers):
        for position, values in enumerate(per_gamma):
            collected[position].append(values)

    points = []
    for gamma, parts in zip(grid, collected):
        values = np.concatenate(parts) if parts else np.zeros(0)
        points.append(GammaPoint(gamma=gamma, ndcg=float(np.mean(values)) if values.size else 0.0))
    n_evaluated = int(sum(part.size for part in collected[0]))

    best = points[0]
    for point in points[1:]:
        if point.ndcg > best.ndcg:
            best = point
    logger.info(
        f"Tuned gamma={best.gamma:g} (validation ndcg@{k}={best.ndcg:.4f}) over {len(grid)} values "
        f"and {n_evaluated} users in {time.perf_counter() - began:.2f}s"
    )
    return GammaCurve(best_gamma=best.gamma, points=points, n_evaluated=n_evaluated, n_skipped=skipped)
