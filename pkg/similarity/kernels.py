"""Row-block kernels for the Sapling Similarity and the co-occurrence baselines.

Every kernel receives the rows [start, stop) of one layer and returns the
corresponding rows of the similarity matrix. Co-occurrences come from one
sparse product ``M[start:stop] @ M.T``; the per-metric normalisations are
vectorised over the stored entries.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from graph_core.bipartite import BipartiteGraph, Layer

logger = logging.getLogger(__name__)

Block = Union[np.ndarray, sp.csr_matrix]


class Metric(str, Enum):
    """Similarity metrics between two nodes of the same layer."""
    SAPLING = "sapling"
    COMMON_NEIGHBORS = "common_neighbors"
    JACCARD = "jaccard"
    ADAMIC_ADAR = "adamic_adar"
    RESOURCE_ALLOCATION = "resource_allocation"
    COSINE = "cosine"
    SORENSEN = "sorensen"
    HDI = "hdi"
    HPI = "hpi"
    TAXONOMY = "taxonomy"
    PROBS = "probs"
    PEARSON = "pearson"

    @property
    def is_signed(self) -> bool:
        """Signed metrics are nonzero even without shared neighbours (dense rows)."""
        return self in (Metric.SAPLING, Metric.PEARSON)

    @property
    def is_symmetric(self) -> bool:
        return self is not Metric.PROBS


# Stable numeric ids for the binary export header
METRIC_IDS = {metric: code for code, metric in enumerate(Metric)}


@dataclass(frozen=True, eq=False)
class LayerStats:
    """Everything a kernel needs about one layer, computed once per matrix."""
    rows: sp.csr_matrix
    degrees: np.ndarray
    other_degrees: np.ndarray
    universe: int
    degenerate: np.ndarray

    @classmethod
    def build(cls, g: BipartiteGraph, layer: Layer) -> "LayerStats":
        layer = Layer(layer)
        rows = g.rows(layer)
        k = np.diff(rows.indptr).astype(np.float64)
        other = g.rows(layer.other)
        universe = g.universe_size(layer)
        return cls(
            rows=rows,
            degrees=k,
            other_degrees=np.diff(other.indptr).astype(np.float64),
            universe=universe,
            degenerate=(k == 0) | (k == universe),
        )

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def _weighted_rows(stats: LayerStats, weights: np.ndarray, start: int, stop: int) -> sp.csr_matrix:
    block = stats.rows[start:stop]
    return (block @ sp.diags(weights)).tocsr()


def _co_block(stats: LayerStats, start: int, stop: int, weights: Optional[np.ndarray] = None) -> sp.csr_matrix:
    if weights is None:
        block = stats.rows[start:stop]
    else:
        block = _weighted_rows(stats, weights, start, stop)
    product = (block @ stats.rows.T).tocsr()
    product.eliminate_zeros()
    product.sort_indices()
    return product


def _resource_weights(stats: LayerStats) -> np.ndarray:
    k = stats.other_degrees
    return np.divide(1.0, k, out=np.zeros_like(k), where=k > 0)


def _adamic_adar_weights(stats: LayerStats) -> np.ndarray:
    # 1/log(1) diverges: intermediate nodes of degree < 2 contribute nothing
    k = stats.other_degrees
    weights = np.zeros_like(k)
    usable = k >= 2
    weights[usable] = 1.0 / np.log(k[usable])
    return weights


def _map_entries(co: sp.csr_matrix, start: int, fn) -> sp.csr_matrix:
    """Apply ``fn(values, row_ids, col_ids)`` to the stored entries of a block."""
    coo = co.tocoo()
    rows = coo.row.astype(np.int64) + start
    cols = coo.col.astype(np.int64)
    values = fn(coo.data, rows, cols)
    out = sp.csr_matrix((values, (coo.row, coo.col)), shape=co.shape)
    out.eliminate_zeros()
    out.sort_indices()
    return out


def _signed_block(stats: LayerStats, metric: Metric, start: int, stop: int) -> np.ndarray:
    """Sapling or Pearson rows [start, stop), using two dense ``block x n`` buffers."""
    values = _co_block(stats, start, stop).toarray().astype(np.float64, copy=False)
    scratch = np.empty_like(values)
    n = float(stats.universe)
    k = stats.degrees
    k_i = k[start:stop, None]
    # k (N - k) is exact in float64; degenerate nodes get 1 since their excess is exactly 0
    spread = k * (n - k)
    spread[stats.degenerate] = 1.0
    spread_i = spread[start:stop, None]
    spread_j = spread[None, :]

    # excess = N CO - k_i k_j, an exact integer
    values *= n
    np.multiply(k_i, k[None, :], out=scratch)
    values -= scratch
    # a single product of per-node factors rounds the same for (i, j) and (j, i)
    if metric is Metric.SAPLING:
        np.abs(values, out=scratch)
        values *= scratch
        np.multiply(spread_i, spread_j, out=scratch)
    else:
        np.multiply(spread_i, spread_j, out=scratch)
        np.sqrt(scratch, out=scratch)
    values /= scratch
    del scratch

    np.clip(values, -1.0, 1.0, out=values)
    local = np.arange(stop - start)
    values[local, np.arange(start, stop)] = 1.0
    values[:, stats.degenerate] = 0.0
    values[stats.degenerate[start:stop], :] = 0.0
    return values


def compute_block(stats: LayerStats, metric: Metric, start: int, stop: int) -> Block:
    """Similarity rows [start, stop) of ``metric`` on the layer described by ``stats``.

    Signed metrics return a dense array, co-occurrence metrics a CSR block
    holding entries only where CO_ij > 0. For the signed metrics the rows and
    columns of degenerate nodes (k = 0 or k = N) are zero; the baselines stay
    well defined at k = N and keep their values.
    """
    metric = Metric(metric)
    k = stats.degrees

    if metric.is_signed:
        return _signed_block(stats, metric, start, stop)

    if metric is Metric.COMMON_NEIGHBORS:
        block = _co_block(stats, start, stop)
    elif metric is Metric.JACCARD:
        block = _map_entries(_co_block(stats, start, stop), start,
                             lambda co, i, j: co / (k[i] + k[j] - co))
    elif metric is Metric.COSINE:
        block = _map_entries(_co_block(stats, start, stop), start,
                             lambda co, i, j: co / np.sqrt(k[i] * k[j]))
    elif metric is Metric.SORENSEN:
        block = _map_entries(_co_block(stats, start, stop), start,
                             lambda co, i, j: co / (k[i] + k[j]))
    elif metric is Metric.HDI:
        block = _map_entries(_co_block(stats, start, stop), start,
                             lambda co, i, j: co / np.maximum(k[i], k[j]))
    elif metric is Metric.HPI:
        block = _map_entries(_co_block(stats, start, stop), start,
                             lambda co, i, j: co / np.minimum(k[i], k[j]))
    elif metric is Metric.ADAMIC_ADAR:
        block = _co_block(stats, start, stop, _adamic_adar_weights(stats))
    elif metric is Metric.RESOURCE_ALLOCATION:
        block = _co_block(stats, start, stop, _resource_weights(stats))
    elif metric is Metric.TAXONOMY:
        block = _map_entries(_co_block(stats, start, stop, _resource_weights(stats)), start,
                             lambda ra, i, j: ra / np.maximum(k[i], k[j]))
    elif metric is Metric.PROBS:
        block = _map_entries(_co_block(stats, start, stop, _resource_weights(stats)), start,
                             lambda ra, i, j: ra / k[j])
    else:
        raise ValueError(f"unsupported metric {metric}")

    return block
