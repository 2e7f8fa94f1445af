"""Train/validation splitting."""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

import numpy as np

from graph_core.bipartite import BipartiteGraph
from graph_core.loaders import RatingTable

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86_400.0


@dataclass(frozen=True, eq=False)
class SplitPair:
    """Disjoint train and held-out parts of one graph."""
    train: BipartiteGraph
    heldout: BipartiteGraph
    seed: int


def heldout_count(degree: int, fraction: float) -> int:
    """ceil(fraction * degree), computed exactly (0.1 * 30 must give 3, not 4)."""
    ratio = Fraction(fraction).limit_denominator(1_000_000)
    return -(-ratio.numerator * degree // ratio.denominator)


def holdout_validation_split(g: BipartiteGraph, fraction: float = 0.10, seed: int = 0) -> SplitPair:
    """Hold out ceil(fraction * k_u) uniformly sampled items of every user."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")

    rng = np.random.default_rng(seed)
    rows = g.user_rows
    heldout_mask = np.zeros(rows.nnz, dtype=bool)
    for u in range(g.n_users):
        start, stop = rows.indptr[u], rows.indptr[u + 1]
        degree = stop - start
        if degree == 0:
            continue
        picked = rng.choice(degree, size=heldout_count(degree, fraction), replace=False)
        heldout_mask[start + picked] = True

    users, items = g.edges()
    train = BipartiteGraph.from_edges(
        users[~heldout_mask], items[~heldout_mask],
        n_users=g.n_users, n_items=g.n_items,
        user_labels=g.user_labels, item_labels=g.item_labels,
    )
    heldout = BipartiteGraph.from_edges(
        users[heldout_mask], items[heldout_mask],
        n_users=g.n_users, n_items=g.n_items,
        user_labels=g.user_labels, item_labels=g.item_labels,
    )
    logger.info(f"Held out {heldout.n_edges} of {g.n_edges} edges (fraction {fraction}, seed {seed})")
    return SplitPair(train=train, heldout=heldout, seed=seed)


def temporal_split(ratings: RatingTable, cutoff_days: float) -> Tuple[RatingTable, RatingTable]:
    """Ratings in the first ``cutoff_days`` days (from the earliest timestamp) vs the rest.

    Timestamps are seconds; a rating exactly at the cutoff belongs to the test part.
    """
    if ratings.timestamps is None:
        raise ValueError("temporal split needs a timestamp column")
    if cutoff_days <= 0:
        raise ValueError(f"cutoff_days must be positive, got {cutoff_days}")
    cutoff = ratings.timestamps.min() + cutoff_days * SECONDS_PER_DAY
    in_train = ratings.timestamps < cutoff
    train, test = ratings.subset(in_train), ratings.subset(~in_train)
    logger.info(f"Temporal split at day {cutoff_days}: {len(train)} train, {len(test)} test ratings")
    return train, test
