"""Immutable unweighted bipartite network in compressed sparse form."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from utils.errors import DataError

logger = logging.getLogger(__name__)

# Index arrays are int32 in scipy's CSR layout
MAX_INDEX = np.iinfo(np.int32).max - 1


class Layer(str, Enum):
    """One of the two node sets of the network."""
    USERS = "users"
    ITEMS = "items"

    @property
    def other(self) -> "Layer":
        return Layer.ITEMS if self is Layer.USERS else Layer.USERS


def _freeze(matrix: sp.csr_matrix) -> sp.csr_matrix:
    for array in (matrix.data, matrix.indices, matrix.indptr):
        array.setflags(write=False)
    return matrix


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """User-item network M stored row-compressed in both orientations.

    ``user_rows`` is the |U| x |Γ| biadjacency matrix, ``item_rows`` its
    transpose. Both are CSR with sorted, distinct column indices and unit
    data, and both are read-only.
    """
    user_rows: sp.csr_matrix
    item_rows: sp.csr_matrix
    user_labels: Optional[Tuple[str, ...]] = None
    item_labels: Optional[Tuple[str, ...]] = None

    @classmethod
    def from_edges(
        cls,
        users: Sequence[int],
        items: Sequence[int],
        n_users: Optional[int] = None,
        n_items: Optional[int] = None,
        user_labels: Optional[Sequence[str]] = None,
        item_labels: Optional[Sequence[str]] = None,
    ) -> "BipartiteGraph":
        """Build a graph from parallel edge arrays, deduplicating repeated pairs."""
        users = np.asarray(users, dtype=np.int64).ravel()
        items = np.asarray(items, dtype=np.int64).ravel()
        if users.shape != items.shape:
            raise DataError(f"edge arrays differ in length: {users.size} users vs {items.size} items")
        if users.size and (users.min() < 0 or items.min() < 0):
            raise DataError("node indices must be non-negative")
        if users.size and (users.max() > MAX_INDEX or items.max() > MAX_INDEX):
            raise DataError(f"node index overflow: indices must not exceed {MAX_INDEX}")

        if n_users is None:
            n_users = int(users.max()) + 1 if users.size else 0
        if n_items is None:
            n_items = int(items.max()) + 1 if items.size else 0
        if users.size and (users.max() >= n_users or items.max() >= n_items):
            raise DataError(
                f"edge index out of declared range ({n_users} users, {n_items} items)"
            )

        matrix = sp.csr_matrix(
            (np.ones(users.size, dtype=np.float64), (users, items)),
            shape=(n_users, n_items),
        )
        matrix.sum_duplicates()
        duplicates = users.size - matrix.nnz
        if duplicates:
            logger.warning(f"Dropped {duplicates} duplicate edges out of {users.size}")
        matrix.data[:] = 1.0
        matrix.sort_indices()

        return cls.from_matrix(matrix, user_labels=user_labels, item_labels=item_labels)

    @classmethod
    def from_matrix(
        cls,
        matrix: sp.spmatrix,
        user_labels: Optional[Sequence[str]] = None,
        item_labels: Optional[Sequence[str]] = None,
    ) -> "BipartiteGraph":
        """Wrap a binary sparse (or dense) matrix; nonzero entries become edges."""
        user_rows = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        user_rows.eliminate_zeros()
        user_rows.data[:] = 1.0
        user_rows.sort_indices()
        item_rows = user_rows.T.tocsr()
        item_rows.sort_indices()

        n_users, n_items = user_rows.shape
        if user_labels is not None and len(user_labels) != n_users:
            raise DataError(f"{len(user_labels)} user labels for {n_users} users")
        if item_labels is not None and len(item_labels) != n_items:
            raise DataError(f"{len(item_labels)} item labels for {n_items} items")

        return cls(
            user_rows=_freeze(user_rows),
            item_rows=_freeze(item_rows),
            user_labels=tuple(str(x) for x in user_labels) if user_labels is not None else None,
            item_labels=tuple(str(x) for x in item_labels) if item_labels is not None else None,
        )

    @property
    def n_users(self) -> int:
        return self.user_rows.shape[0]

    @property
    def n_items(self) -> int:
        return self.user_rows.shape[1]

    @property
    def n_edges(self) -> int:
        return self.user_rows.nnz

    def rows(self, layer: Layer) -> sp.csr_matrix:
        """Matrix whose rows are the nodes of ``layer``."""
        return self.user_rows if Layer(layer) is Layer.USERS else self.item_rows

    def layer_size(self, layer: Layer) -> int:
        return self.rows(layer).shape[0]

    def universe_size(self, layer: Layer) -> int:
        """N for similarity on ``layer``: the size of the opposite layer."""
        return self.rows(layer).shape[1]

    def labels(self, layer: Layer) -> Optional[Tuple[str, ...]]:
        return self.user_labels if Layer(layer) is Layer.USERS else self.item_labels

    def neighbors(self, layer: Layer, i: int) -> np.ndarray:
        """Sorted indices of the opposite-layer nodes linked to node ``i``."""
        rows = self.rows(layer)
        _check_index(i, rows.shape[0], layer)
        return rows.indices[rows.indptr[i]:rows.indptr[i + 1]]

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Edge list as (user, item) arrays in row-major order."""
        coo = self.user_rows.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64)

    def transposed(self) -> "BipartiteGraph":
        """Same network with the roles of users and items swapped."""
        return BipartiteGraph(
            user_rows=self.item_rows,
            item_rows=self.user_rows,
            user_labels=self.item_labels,
            item_labels=self.user_labels,
        )

    def index_of(self, layer: Layer, key: str) -> int:
        """Resolve a node given either its label or its integer index."""
        labels = self.labels(layer)
        if labels is not None and key in labels:
            return labels.index(key)
        try:
            index = int(key)
        except (TypeError, ValueError):
            raise DataError(f"unknown {Layer(layer).value} label {key!r}")
        _check_index(index, self.layer_size(layer), layer)
        return index

    def __repr__(self):
        return f"BipartiteGraph(n_users={self.n_users}, n_items={self.n_items}, n_edges={self.n_edges})"


@dataclass(frozen=True, eq=False)
class DegreeVector:
    """Per-node degree counts k on one layer."""
    layer: Layer
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _check_index(i: int, n: int, layer: Layer):
    if not 0 <= i < n:
        raise IndexError(f"{Layer(layer).value} index {i} out of range [0, {n})")


def degrees(g: BipartiteGraph, layer: Layer) -> DegreeVector:
    """Number of links of every node on ``layer``."""
    rows = g.rows(layer)
    counts = np.diff(rows.indptr).astype(np.int64)
    return DegreeVector(layer=Layer(layer), counts=counts)


def co_occurrence_row(g: BipartiteGraph, layer: Layer, i: int) -> sp.csr_matrix:
    """Common-neighbour counts CO_ij of node ``i`` with every node j of its layer.

    Scatters over the neighbour lists of i's neighbours; the result is a
    1 x n sparse row holding only positive counts, with CO_ii = k_i.
    """
    rows = g.rows(layer)
    other = g.rows(Layer(layer).other)
    n = rows.shape[0]
    _check_index(i, n, layer)

    neighbors = rows.indices[rows.indptr[i]:rows.indptr[i + 1]]
    if neighbors.size == 0:
        return sp.csr_matrix((1, n), dtype=np.int64)
    reached = np.concatenate([
        other.indices[other.indptr[lam]:other.indptr[lam + 1]] for lam in neighbors
    ])
    counts = np.bincount(reached, minlength=n).astype(np.int64)
    nonzero = np.flatnonzero(counts)
    return sp.csr_matrix(
        (counts[nonzero], (np.zeros(nonzero.size, dtype=np.int64), nonzero)),
        shape=(1, n),
    )
