"""Explicit rating prediction from a binarised-graph similarity."""
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from config import settings
from graph_core.bipartite import Layer
from graph_core.loaders import RatingTable
from recommender.scoring import ScoreMode
from similarity.matrix import SimilaritySource
from utils.errors import DataError
from utils.parallel import block_ranges, ordered_map

logger = logging.getLogger(__name__)


def _as_matrix(ratings: Union[RatingTable, sp.spmatrix]) -> sp.csr_matrix:
    if isinstance(ratings, RatingTable):
        return ratings.to_matrix()
    return sp.csr_matrix(ratings, dtype=np.float64)


def predict_ratings(
    B: SimilaritySource,
    ratings: Union[RatingTable, sp.spmatrix],
    targets: Sequence[Tuple[int, int]],
    mode: Union[ScoreMode, str] = ScoreMode.USER,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Predict the rating of every ``(user, item)`` target.

    In user mode the prediction is Σ_j B_ij·R_jα / Σ_j |B_ij| over the train
    raters j of item α; in item mode Σ_λ B_αλ·R_iλ / Σ_λ |B_αλ| over the items
    λ rated by user i. Raw ratings are used, including low ones. Targets with
    no neighbour or a zero denominator get the global train mean.
    """
    mode = ScoreMode(mode)
    if mode not in (ScoreMode.USER, ScoreMode.ITEM):
        raise ValueError(f"rating prediction supports user or item mode, got {mode.value}")
    R = _as_matrix(ratings)
    if R.nnz == 0:
        raise DataError("no train ratings to predict from")
    n_users, n_items = R.shape
    expected = n_users if mode is ScoreMode.USER else n_items
    if Layer(B.layer) is not (Layer.USERS if mode is ScoreMode.USER else Layer.ITEMS) or B.n != expected:
        raise DataError(f"{mode.value}-mode prediction needs a {expected}-node "
                        f"{'users' if mode is ScoreMode.USER else 'items'} similarity")

    pairs = np.asarray(targets, dtype=np.int64).reshape(-1, 2)
    users, items = pairs[:, 0], pairs[:, 1]
    bad = (users < 0) | (users >= n_users) | (items < 0) | (items >= n_items)
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise DataError(f"target {tuple(pairs[first].tolist())} out of range ({n_users} users, {n_items} items)")

    global_mean = float(R.data.mean())
    rated = R.copy()
    rated.data = np.ones_like(rated.data)
    predictions = np.full(pairs.shape[0], global_mean)
    # Rows of B are indexed by the target user (user mode) or target item (item mode)
    owners = users if mode is ScoreMode.USER else items

    def predict(bounds):
        start, stop = bounds
        picked = np.flatnonzero((owners >= start) & (owners < stop))
        if picked.size == 0:
            return picked, np.zeros(0)
        block = sp.csr_matrix(B.block(start, stop))
        weights = abs(block)
        if mode is ScoreMode.USER:
            numerator = (block @ R).toarray()
            denominator = (weights @ rated).toarray()
            rows, cols = users[picked] - start, items[picked]
        else:
            numerator = (R @ block.T).toarray()
            denominator = (rated @ weights.T).toarray()
            rows, cols = users[picked], items[picked] - start
        num, den = numerator[rows, cols], denominator[rows, cols]
        values = np.divide(num, den, out=np.full(picked.size, global_mean), where=den > 0)
        return picked, values

    for picked, values in ordered_map(predict, block_ranges(expected, block_size or settings.block_size),
                                      workers or settings.workers):
        predictions[picked] = values

    logger.info(f"Predicted {pairs.shape[0]} ratings in {mode.value} mode (global mean {global_mean:.3f})")
    return predictions
