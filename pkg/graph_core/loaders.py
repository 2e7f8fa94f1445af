"""Dataset ingestion: edge lists, export volumes and ratings."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from config import EdgeListFormat
from graph_core.bipartite import MAX_INDEX, BipartiteGraph
from utils.errors import DataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _parse_header(line: str) -> Optional[Tuple[int, int]]:
    tokens = line.lstrip("#").split()
    if len(tokens) != 2:
        return None
    try:
        return int(tokens[0]), int(tokens[1])
    except ValueError:
        return None


def _read_edges(path: Path, fmt: EdgeListFormat) -> Tuple[np.ndarray, np.ndarray, Optional[Tuple[int, int]], int]:
    users: List[int] = []
    items: List[int] = []
    header = None
    max_user = -1
    seen_lines = 0

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if seen_lines == 0 and header is None:
                    header = _parse_header(stripped)
                continue
            seen_lines += 1
            try:
                values = [int(token) for token in stripped.split()]
            except ValueError:
                raise DataError(f"{path}:{line_no}: non-integer token in {stripped[:60]!r}")
            if any(v < 0 for v in values):
                raise DataError(f"{path}:{line_no}: negative node index")
            if any(v > MAX_INDEX for v in values):
                raise DataError(f"{path}:{line_no}: node index overflow (> {MAX_INDEX})")

            if fmt is EdgeListFormat.PAIRS:
                if len(values) != 2:
                    raise DataError(f"{path}:{line_no}: expected 'user item', got {len(values)} fields")
                users.append(values[0])
                items.append(values[1])
                max_user = max(max_user, values[0])
            else:
                user, neighbours = values[0], values[1:]
                users.extend([user] * len(neighbours))
                items.extend(neighbours)
                # A user line without items still declares the user
                max_user = max(max_user, user)

    if seen_lines == 0:
        raise DataError(f"{path}: empty edge list")
    return np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64), header, max_user


def load_edge_list(
    path: PathLike,
    format: Union[EdgeListFormat, str] = EdgeListFormat.ADJACENCY,
    n_users: Optional[int] = None,
    n_items: Optional[int] = None,
) -> BipartiteGraph:
    """Load an edge list file into a graph.

    ``adjacency`` files hold one ``u i1 i2 ... im`` line per user, ``pairs``
    files one ``u i`` pair per line. An optional first line ``# n_users n_items``
    fixes the layer sizes (so zero-degree nodes count in N); explicit
    ``n_users``/``n_items`` arguments take precedence over it.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"edge list does not exist: {path}")
    fmt = EdgeListFormat(format)

    users, items, header, max_user = _read_edges(path, fmt)
    if header is not None:
        n_users = n_users if n_users is not None else header[0]
        n_items = n_items if n_items is not None else header[1]
    if n_users is None:
        n_users = max_user + 1
    if n_items is None:
        n_items = int(items.max()) + 1 if items.size else 0

    g = BipartiteGraph.from_edges(users, items, n_users=n_users, n_items=n_items)
    logger.info(f"Loaded {path.name}: {g.n_users} users, {g.n_items} items, {g.n_edges} edges")
    return g


def load_split_pair(
    train_path: PathLike,
    test_path: PathLike,
    format: Union[EdgeListFormat, str] = EdgeListFormat.ADJACENCY,
) -> Tuple[BipartiteGraph, BipartiteGraph]:
    """Load a benchmark train/test pair into one shared index space."""
    fmt = EdgeListFormat(format)
    train_path, test_path = Path(train_path), Path(test_path)
    for path in (train_path, test_path):
        if not path.is_file():
            raise DataError(f"edge list does not exist: {path}")

    tr_users, tr_items, tr_header, tr_max = _read_edges(train_path, fmt)
    te_users, te_items, te_header, te_max = _read_edges(test_path, fmt)

    n_users = max(tr_max, te_max) + 1
    n_items = max(int(tr_items.max()) if tr_items.size else -1,
                  int(te_items.max()) if te_items.size else -1) + 1
    for header in (tr_header, te_header):
        if header is not None:
            n_users = max(n_users, header[0])
            n_items = max(n_items, header[1])

    train = BipartiteGraph.from_edges(tr_users, tr_items, n_users=n_users, n_items=n_items)
    test = BipartiteGraph.from_edges(te_users, te_items, n_users=n_users, n_items=n_items)
    logger.info(
        f"Loaded split: {n_users} users, {n_items} items, "
        f"{train.n_edges} train edges, {test.n_edges} test edges"
    )
    return train, test


def write_edge_list(g: BipartiteGraph, path: PathLike):
    """Write ``g`` in adjacency-lines format with a ``# n_users n_items`` header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = g.user_rows
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {g.n_users} {g.n_items}\n")
        for u in range(g.n_users):
            neighbours = rows.indices[rows.indptr[u]:rows.indptr[u + 1]]
            fh.write(" ".join([str(u)] + [str(int(i)) for i in neighbours]) + "\n")
    logger.info(f"Wrote {g.n_edges} edges to {path}")


def write_labels(labels: Optional[Sequence[str]], path: PathLike):
    """Write an ``index,label`` CSV; nothing is written for unlabeled layers."""
    if labels is None:
        return
    frame = pd.DataFrame({"index": np.arange(len(labels)), "label": list(labels)})
    frame.to_csv(path, index=False)


# --- export volumes ---------------------------------------------------------


def load_export_csv(path: PathLike) -> Tuple[np.ndarray, List[str], List[str]]:
    """Read ``country,product,value`` rows into a dense volume matrix.

    Repeated (country, product) rows are summed. Returns the matrix and the
    country and product labels in sorted order.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"export file does not exist: {path}")
    frame = pd.read_csv(path, dtype={"country": str, "product": str})
    missing = {"country", "product", "value"} - set(frame.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    if frame["value"].isna().any():
        raise DataError(f"{path}: missing export values")

    volumes = frame.pivot_table(
        index="country", columns="product", values="value", aggfunc="sum", fill_value=0.0
    ).sort_index(axis=0).sort_index(axis=1)
    return volumes.to_numpy(dtype=np.float64), list(volumes.index), list(volumes.columns)


def rca_binarize(
    export_volumes: np.ndarray,
    threshold: float = 1.0,
    country_labels: Optional[Sequence[str]] = None,
    product_labels: Optional[Sequence[str]] = None,
) -> BipartiteGraph:
    """Link country i to product α when its Revealed Comparative Advantage reaches ``threshold``.

    RCA_iα = (E_iα / Σ_λ E_iλ) · (Σ_l Σ_λ E_lλ / Σ_l E_lα)
    """
    if threshold <= 0:
        raise DataError(f"RCA threshold must be positive, got {threshold}")
    volumes = np.asarray(export_volumes, dtype=np.float64)
    if volumes.ndim != 2:
        raise DataError(f"export volumes must be a 2-d matrix, got shape {volumes.shape}")
    if (volumes < 0).any():
        raise DataError("export volumes must be non-negative")

    row_totals = volumes.sum(axis=1)
    col_totals = volumes.sum(axis=0)
    zero_rows = np.flatnonzero(row_totals == 0)
    zero_cols = np.flatnonzero(col_totals == 0)
    if zero_rows.size or zero_cols.size:
        raise DataError(
            f"RCA undefined: {zero_rows.size} all-zero countries (first {zero_rows[:5].tolist()}), "
            f"{zero_cols.size} all-zero products (first {zero_cols[:5].tolist()})"
        )

    # single rounding step: uniform volumes give RCA == 1.0 exactly
    rca = (volumes * volumes.sum()) / (row_totals[:, None] * col_totals[None, :])
    g = BipartiteGraph.from_matrix(
        sp.csr_matrix(rca >= threshold),
        user_labels=country_labels,
        item_labels=product_labels,
    )
    logger.info(f"RCA >= {threshold}: {g.n_edges} links over {volumes.shape[0]}x{volumes.shape[1]}")
    return g


# --- ratings ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RatingTable:
    """Explicit ratings as parallel arrays over a fixed user x item index space."""
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    n_users: int
    n_items: int
    timestamps: Optional[np.ndarray] = None
    user_labels: Optional[Tuple[str, ...]] = None
    item_labels: Optional[Tuple[str, ...]] = None

    def __len__(self):
        return int(self.ratings.size)

    def subset(self, mask: np.ndarray) -> "RatingTable":
        """Rows selected by a boolean mask, in the same index space."""
        return RatingTable(
            users=self.users[mask],
            items=self.items[mask],
            ratings=self.ratings[mask],
            n_users=self.n_users,
            n_items=self.n_items,
            timestamps=self.timestamps[mask] if self.timestamps is not None else None,
            user_labels=self.user_labels,
            item_labels=self.item_labels,
        )

    def to_matrix(self) -> sp.csr_matrix:
        """Sparse user x item rating matrix; for repeated pairs the last row wins."""
        frame = pd.DataFrame({"u": self.users, "i": self.items, "r": self.ratings})
        frame = frame.drop_duplicates(subset=["u", "i"], keep="last")
        return sp.csr_matrix(
            (frame["r"].to_numpy(np.float64), (frame["u"].to_numpy(), frame["i"].to_numpy())),
            shape=(self.n_users, self.n_items),
        )


def load_ratings_csv(path: PathLike) -> RatingTable:
    """Read ``user,item,rating[,timestamp]`` rows; ids are mapped to dense indices."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"ratings file does not exist: {path}")
    frame = pd.read_csv(path, dtype={"user": str, "item": str})
    missing = {"user", "item", "rating"} - set(frame.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    if frame["rating"].isna().any():
        raise DataError(f"{path}: missing rating values")

    user_codes, user_labels = pd.factorize(frame["user"], sort=True)
    item_codes, item_labels = pd.factorize(frame["item"], sort=True)
    timestamps = frame["timestamp"].to_numpy(np.float64) if "timestamp" in frame.columns else None
    table = RatingTable(
        users=user_codes.astype(np.int64),
        items=item_codes.astype(np.int64),
        ratings=frame["rating"].to_numpy(np.float64),
        n_users=len(user_labels),
        n_items=len(item_labels),
        timestamps=timestamps,
        user_labels=tuple(user_labels),
        item_labels=tuple(item_labels),
    )
    logger.info(f"Loaded {len(table)} ratings: {table.n_users} users, {table.n_items} items")
    return table


def threshold_ratings(ratings: Union[RatingTable, sp.spmatrix], min_rating: float) -> BipartiteGraph:
    """Keep a link wherever the rating is at least ``min_rating``."""
    if isinstance(ratings, RatingTable):
        matrix = ratings.to_matrix()
        user_labels, item_labels = ratings.user_labels, ratings.item_labels
    else:
        matrix = sp.csr_matrix(ratings, dtype=np.float64)
        user_labels = item_labels = None
    coo = matrix.tocoo()
    keep = coo.data >= min_rating
    return BipartiteGraph.from_edges(
        coo.row[keep],
        coo.col[keep],
        n_users=matrix.shape[0],
        n_items=matrix.shape[1],
        user_labels=user_labels,
        item_labels=item_labels,
    )
