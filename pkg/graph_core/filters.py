"""Degree-based pruning of bipartite graphs."""
import logging

import numpy as np

from graph_core.bipartite import BipartiteGraph

logger = logging.getLogger(__name__)


def filter_min_degree(g: BipartiteGraph, min_deg: int) -> BipartiteGraph:
    """Repeatedly drop users and items with degree below ``min_deg``.

    Removing a node lowers its neighbours' degrees, so pruning runs until no
    node falls below the threshold. The result is densely reindexed; its
    labels point back to the input (input labels when present, input indices
    otherwise).
    """
    if min_deg < 0:
        raise ValueError(f"min_deg must be >= 0, got {min_deg}")
    if min_deg == 0:
        return g

    matrix = g.user_rows
    user_ids = np.arange(g.n_users)
    item_ids = np.arange(g.n_items)
    rounds = 0
    while True:
        user_deg = np.diff(matrix.indptr)
        item_deg = np.bincount(matrix.indices, minlength=matrix.shape[1])
        keep_users = user_deg >= min_deg
        keep_items = item_deg >= min_deg
        if keep_users.all() and keep_items.all():
            break
        matrix = matrix[keep_users][:, keep_items]
        user_ids = user_ids[keep_users]
        item_ids = item_ids[keep_items]
        rounds += 1

    user_labels = g.user_labels or tuple(str(i) for i in range(g.n_users))
    item_labels = g.item_labels or tuple(str(i) for i in range(g.n_items))
    filtered = BipartiteGraph.from_matrix(
        matrix,
        user_labels=[user_labels[i] for i in user_ids],
        item_labels=[item_labels[i] for i in item_ids],
    )
    logger.info(
        f"Degree filter >= {min_deg} converged after {rounds} rounds: "
        f"{g.n_users}x{g.n_items} -> {filtered.n_users}x{filtered.n_items}, {filtered.n_edges} edges"
    )
    return filtered
