"""Similarity matrices: streamed row blocks, materialised sparse rows, top-k truncation."""
import logging
import time
from dataclasses import dataclass, replace
from typing import Iterator, List, Optional, Protocol, Tuple

import numpy as np
import scipy.sparse as sp

from config import settings
from graph_core.bipartite import BipartiteGraph, Layer, degrees
from similarity.kernels import Block, LayerStats, Metric, compute_block
from utils.errors import ComputationError
from utils.parallel import block_ranges, budgeted_block_size, ordered_map

logger = logging.getLogger(__name__)


class SimilaritySource(Protocol):
    """Anything that can hand out similarity rows [start, stop) of one layer."""
    layer: Layer
    metric: Metric

    @property
    def n(self) -> int: ...

    def block(self, start: int, stop: int) -> Block: ...


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Materialised node-node similarity on one layer.

    ``values`` is an n x n CSR matrix with sorted column indices; absent
    entries are zero. The diagonal is stored but never used for scoring
    decisions other than the optional self term.
    """
    layer: Layer
    metric: Metric
    values: sp.csr_matrix
    truncation: Optional[int] = None
    labels: Optional[Tuple[str, ...]] = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def block(self, start: int, stop: int) -> sp.csr_matrix:
        return self.values[start:stop]

    def row(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Column indices and values stored in row ``i``."""
        start, stop = self.values.indptr[i], self.values.indptr[i + 1]
        return self.values.indices[start:stop], self.values.data[start:stop]

    def value(self, i: int, j: int) -> float:
        return float(self.values[i, j])

    def to_dense(self) -> np.ndarray:
        return self.values.toarray()

    def iter_blocks(self, block_size: Optional[int] = None, workers: int = 1) -> Iterator[Tuple[int, int, Block]]:
        for start, stop in block_ranges(self.n, block_size or settings.block_size):
            yield start, stop, self.block(start, stop)

    def __repr__(self):
        return (f"SimilarityMatrix(layer={self.layer.value}, metric={self.metric.value}, "
                f"n={self.n}, nnz={self.values.nnz}, truncation={self.truncation})")


class BlockedSimilarity:
    """Lazily computed similarity rows, optionally truncated to the top k per row.

    Nothing is stored: every ``block`` call recomputes its rows from the
    immutable graph, so blocks can be produced concurrently.
    """

    def __init__(self, g: BipartiteGraph, layer: Layer, metric: Metric, topk: Optional[int] = None):
        if topk is not None and topk < 1:
            raise ValueError(f"topk must be >= 1, got {topk}")
        self.layer = Layer(layer)
        self.metric = Metric(metric)
        self.topk = topk
        self.labels = g.labels(self.layer)
        self.stats = LayerStats.build(g, self.layer)
        if self.stats.n < 2:
            raise ComputationError(f"{self.layer.value} layer needs at least 2 nodes, has {self.stats.n}")

        n_degenerate = int(self.stats.degenerate.sum())
        if n_degenerate and self.metric.is_signed:
            logger.warning(
                f"{n_degenerate} {self.layer.value} nodes have degree 0 or {self.stats.universe}; "
                f"their {self.metric.value} similarities are set to 0"
            )

    @property
    def n(self) -> int:
        return self.stats.n

    def block(self, start: int, stop: int) -> Block:
        values = compute_block(self.stats, self.metric, start, stop)
        if self.topk is not None:
            values = truncate_block(values, start, self.topk)
        return values

    def block_rows(self, block_size: int, workers: int) -> int:
        """Block size capped so that dense signed blocks of all workers fit the memory budget.

        Each worker holds a result and a scratch buffer while computing, and
        up to ``workers + 1`` finished blocks wait in the ordered window.
        """
        if not self.metric.is_signed:
            return block_size
        capped = budgeted_block_size(block_size, 8 * self.n, 3 * workers + 1, settings.memory_budget_mb)
        if capped < block_size:
            logger.info(f"{self.metric.value} blocks of {capped} rows to fit {settings.memory_budget_mb} MB")
        return capped

    def iter_blocks(self, block_size: Optional[int] = None, workers: Optional[int] = None) -> Iterator[Tuple[int, int, Block]]:
        """Yield ``(start, stop, rows)`` in row order, computing blocks in parallel."""
        workers = workers or settings.workers
        ranges = block_ranges(self.n, self.block_rows(block_size or settings.block_size, workers))
        results = ordered_map(lambda r: (r[0], r[1], self.block(r[0], r[1])), ranges, workers)
        for done, result in enumerate(results, start=1):
            logger.debug(f"{self.metric.value} block {done}/{len(ranges)} ready")
            yield result

    def materialize(
        self,
        block_size: Optional[int] = None,
        workers: Optional[int] = None,
        dense_cap: Optional[int] = None,
    ) -> SimilarityMatrix:
        dense_cap = settings.dense_cap if dense_cap is None else dense_cap
        if self.metric.is_signed and self.topk is None and self.n > dense_cap:
            raise ComputationError(
                f"{self.metric.value} rows are dense and the {self.layer.value} layer has {self.n} nodes "
                f"(cap {dense_cap}); stream the blocks or set a top-k truncation"
            )
        began = time.perf_counter()
        parts = [sp.csr_matrix(rows) for _, _, rows in self.iter_blocks(block_size, workers)]
        values = sp.vstack(parts, format="csr")
        values.eliminate_zeros()
        values.sort_indices()
        logger.info(
            f"Built {self.metric.value} similarity on {self.n} {self.layer.value}: "
            f"{values.nnz} entries in {time.perf_counter() - began:.2f}s"
        )
        return SimilarityMatrix(
            layer=self.layer,
            metric=self.metric,
            values=values,
            truncation=self.topk,
            labels=self.labels,
        )


def similarity_matrix(
    g: BipartiteGraph,
    layer: Layer,
    metric: Metric,
    topk: Optional[int] = None,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
    dense_cap: Optional[int] = None,
) -> SimilarityMatrix:
    """Compute and store the similarity of every node pair on ``layer``."""
    return BlockedSimilarity(g, layer, metric, topk=topk).materialize(block_size, workers, dense_cap)


def _topk_positions(cols: np.ndarray, vals: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k largest |vals|, ties to the smaller column, in column order."""
    if cols.size <= k:
        return np.arange(cols.size)
    magnitude = np.abs(vals)
    kth = np.partition(magnitude, cols.size - k)[cols.size - k]
    candidates = np.flatnonzero(magnitude >= kth)
    order = np.lexsort((cols[candidates], -magnitude[candidates]))
    return np.sort(candidates[order[:k]])


def _truncate_row(cols: np.ndarray, vals: np.ndarray, row: int, k: int) -> Tuple[np.ndarray, np.ndarray]:
    off_diagonal = cols != row
    kept = np.flatnonzero(off_diagonal)[_topk_positions(cols[off_diagonal], vals[off_diagonal], k)]
    kept = np.sort(np.concatenate([kept, np.flatnonzero(~off_diagonal)]))
    return cols[kept], vals[kept]


def truncate_block(block: Block, start: int, k: int) -> sp.csr_matrix:
    """Keep, per row, the k entries of largest |value| besides the diagonal."""
    indptr: List[int] = [0]
    indices: List[np.ndarray] = []
    data: List[np.ndarray] = []
    dense = isinstance(block, np.ndarray)
    csr = None if dense else sp.csr_matrix(block)
    n_rows, n_cols = block.shape

    for local in range(n_rows):
        if dense:
            cols = np.flatnonzero(block[local])
            vals = block[local, cols]
        else:
            lo, hi = csr.indptr[local], csr.indptr[local + 1]
            cols, vals = csr.indices[lo:hi], csr.data[lo:hi]
        cols, vals = _truncate_row(cols, vals, start + local, k)
        indices.append(cols)
        data.append(vals)
        indptr.append(indptr[-1] + cols.size)

    return sp.csr_matrix(
        (
            np.concatenate(data) if data else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int32),
            np.asarray(indptr),
        ),
        shape=(n_rows, n_cols),
    )


def topk_filter(B: SimilarityMatrix, k: int) -> SimilarityMatrix:
    """Zero all but the k largest-|value| entries of every row (diagonal kept aside).

    Ties are broken toward the smaller node index.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    values = truncate_block(B.values, 0, k)
    values.eliminate_zeros()
    return replace(B, values=values, truncation=k if B.truncation is None else min(k, B.truncation))


def probs_asymmetry_check(B: SimilarityMatrix, g: BipartiteGraph, n_pairs: int = 1000, seed: int = 0) -> float:
    """max |B_ij·k_j - B_ji·k_i| over sampled pairs.

    Probabilistic Spreading is not symmetric, but B_ij·k_j is; a nonzero
    result means an orientation was flipped somewhere.
    """
    k = degrees(g, B.layer).counts.astype(np.float64)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, B.n, size=n_pairs)
    j = rng.integers(0, B.n, size=n_pairs)
    forward = np.asarray(B.values[i, j]).ravel()
    backward = np.asarray(B.values[j, i]).ravel()
    if forward.size == 0:
        return 0.0
    return float(np.max(np.abs(forward * k[j] - backward * k[i])))
