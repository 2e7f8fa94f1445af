"""Recommendation scores from similarity rows: user-based, item-based, hybrid, popularity."""
import logging
import os
import time
import uuid
import weakref
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from numpy.lib.format import open_memmap

from config import settings
from graph_core.bipartite import BipartiteGraph, Layer, degrees
from similarity.kernels import Block
from similarity.matrix import SimilaritySource
from utils.errors import DataError
from utils.parallel import block_ranges, budgeted_block_size, ordered_map

logger = logging.getLogger(__name__)


class ScoreMode(str, Enum):
    """Where a score matrix comes from."""
    USER = "user"
    ITEM = "item"
    HYBRID = "hybrid"
    POPULARITY = "popularity"


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Confidence of recommending every item to every user.

    ``values`` is a dense users x items array, disk-backed when large.
    """
    values: np.ndarray
    mode: ScoreMode
    gamma: Optional[float] = None
    metric: Optional[str] = None

    @property
    def n_users(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]

    def row(self, user: int) -> np.ndarray:
        return self.values[user]


def allocate_scores(n_users: int, n_items: int) -> np.ndarray:
    """Zero users x items array, memory-mapped under ``scratch_dir`` above the size threshold."""
    size_mb = n_users * n_items * 8 / 2**20
    if size_mb <= settings.memmap_threshold_mb:
        return np.zeros((n_users, n_items), dtype=np.float64)
    settings.scratch_dir.mkdir(parents=True, exist_ok=True)
    path = settings.scratch_dir / f"scores-{uuid.uuid4().hex}.npy"
    logger.info(f"Score matrix of {size_mb:.0f} MB backed by {path}")
    values = open_memmap(path, mode="w+", dtype=np.float64, shape=(n_users, n_items))
    try:
        # the open mapping keeps the pages; the name is no longer needed
        os.unlink(path)
    except OSError:
        # mapped files cannot be unlinked on Windows: remove once the array is collected
        weakref.finalize(values, _remove_scratch, path)
    return values


def _remove_scratch(path: Path):
    try:
        path.unlink(missing_ok=True)
    except OSError as e:
        logger.warning(f"Could not remove scratch file {path}: {e}")


def _without_self(block: Block, start: int) -> Block:
    rows = np.arange(block.shape[0])
    cols = rows + start
    if isinstance(block, np.ndarray):
        block = block.copy()
        block[rows, cols] = 0.0
        return block
    mask = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=block.shape)
    out = sp.csr_matrix(block) - sp.csr_matrix(block).multiply(mask)
    out.eliminate_zeros()
    return out


def _abs_row_sums(block: Block) -> np.ndarray:
    if isinstance(block, np.ndarray):
        return np.abs(block).sum(axis=1)
    return np.asarray(abs(block).sum(axis=1)).ravel()


def _score_block_rows(n: int, n_other: int, block_size: Optional[int], workers: int) -> int:
    # per worker: similarity rows and their scratch (n wide), numerator and quotient (n_other wide)
    return budgeted_block_size(block_size or settings.block_size, 8 * (2 * n + 2 * n_other), workers,
                               settings.memory_budget_mb)


def _check_source(B: SimilaritySource, layer: Layer, expected: int):
    if Layer(B.layer) is not layer:
        raise DataError(f"expected a {layer.value}-layer similarity, got {Layer(B.layer).value}")
    if B.n != expected:
        raise DataError(f"similarity has {B.n} nodes but the graph has {expected} {layer.value}")


def score_user_based(
    B_user: SimilaritySource,
    g: BipartiteGraph,
    include_self: bool = True,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> ScoreMatrix:
    """S_iα = Σ_l B_il·M_lα / Σ_l |B_il|, one block of users at a time.

    Users whose similarity row is all zero score 0 everywhere.
    """
    _check_source(B_user, Layer.USERS, g.n_users)
    began = time.perf_counter()
    items_by_user = g.user_rows
    out = allocate_scores(g.n_users, g.n_items)

    def fill(bounds):
        start, stop = bounds
        block = B_user.block(start, stop)
        if not include_self:
            block = _without_self(block, start)
        if isinstance(block, np.ndarray):
            numerator = np.asarray((items_by_user.T @ block.T).T)
        else:
            numerator = (block @ items_by_user).toarray()
        denominator = _abs_row_sums(block)[:, None]
        out[start:stop] = np.divide(numerator, denominator,
                                    out=np.zeros_like(numerator), where=denominator > 0)

    workers = workers or settings.workers
    rows = _score_block_rows(g.n_users, g.n_items, block_size, workers)
    for _ in ordered_map(fill, block_ranges(g.n_users, rows), workers):
        pass
    logger.info(f"User-based scores for {g.n_users} users in {time.perf_counter() - began:.2f}s")
    return ScoreMatrix(values=out, mode=ScoreMode.USER, gamma=0.0, metric=_metric_name(B_user))


def score_item_based(
    B_item: SimilaritySource,
    g: BipartiteGraph,
    include_self: bool = True,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> ScoreMatrix:
    """S_iα = Σ_λ B_αλ·M_iλ / Σ_λ |B_αλ|, one block of items (score columns) at a time."""
    _check_source(B_item, Layer.ITEMS, g.n_items)
    began = time.perf_counter()
    items_by_user = g.user_rows
    out = allocate_scores(g.n_users, g.n_items)

    def fill(bounds):
        start, stop = bounds
        block = B_item.block(start, stop)
        if not include_self:
            block = _without_self(block, start)
        if isinstance(block, np.ndarray):
            numerator = np.asarray(items_by_user @ block.T)
        else:
            numerator = (items_by_user @ block.T).toarray()
        denominator = _abs_row_sums(block)[None, :]
        out[:, start:stop] = np.divide(numerator, denominator,
                                       out=np.zeros_like(numerator), where=denominator > 0)

    workers = workers or settings.workers
    rows = _score_block_rows(g.n_items, g.n_users, block_size, workers)
    for _ in ordered_map(fill, block_ranges(g.n_items, rows), workers):
        pass
    logger.info(f"Item-based scores for {g.n_items} items in {time.perf_counter() - began:.2f}s")
    return ScoreMatrix(values=out, mode=ScoreMode.ITEM, gamma=1.0, metric=_metric_name(B_item))


def hybrid_rows(user_rows: np.ndarray, item_rows: np.ndarray, gamma: float) -> np.ndarray:
    """(1 - γ)·S_user + γ·S_item, written as S_user + γ·(S_item - S_user).

    The endpoints return exact copies of the inputs.
    """
    if gamma == 0.0:
        return np.array(user_rows, dtype=np.float64)
    if gamma == 1.0:
        return np.array(item_rows, dtype=np.float64)
    return user_rows + gamma * (item_rows - user_rows)


def score_hybrid(
    S_user: ScoreMatrix,
    S_item: ScoreMatrix,
    gamma: float,
    block_size: Optional[int] = None,
) -> ScoreMatrix:
    """Weighted average of user-based and item-based scores."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if S_user.values.shape != S_item.values.shape:
        raise DataError(f"score shapes differ: {S_user.values.shape} vs {S_item.values.shape}")
    out = allocate_scores(S_user.n_users, S_user.n_items)
    for start, stop in block_ranges(S_user.n_users, block_size or settings.block_size):
        out[start:stop] = hybrid_rows(S_user.values[start:stop], S_item.values[start:stop], gamma)
    metric = S_user.metric if S_user.metric == S_item.metric else f"{S_user.metric}+{S_item.metric}"
    return ScoreMatrix(values=out, mode=ScoreMode.HYBRID, gamma=gamma, metric=metric)


def preferential_attachment_scores(g: BipartiteGraph) -> ScoreMatrix:
    """S_iα = k_i·k_α."""
    k_users = degrees(g, Layer.USERS).counts.astype(np.float64)
    k_items = degrees(g, Layer.ITEMS).counts.astype(np.float64)
    out = allocate_scores(g.n_users, g.n_items)
    for start, stop in block_ranges(g.n_users, settings.block_size):
        out[start:stop] = np.outer(k_users[start:stop], k_items)
    return ScoreMatrix(values=out, mode=ScoreMode.POPULARITY, metric="preferential_attachment")


def _metric_name(B: SimilaritySource) -> str:
    return getattr(B.metric, "value", str(B.metric))
