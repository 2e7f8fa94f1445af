"""Top-n recommendation lists."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config import settings
from graph_core.bipartite import BipartiteGraph
from recommender.scoring import ScoreMatrix
from utils.parallel import block_ranges, ordered_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RankedList:
    """Recommended items of one user, best first."""
    user: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return int(self.items.size)


def rank_row(scores: np.ndarray, excluded: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` highest scores outside ``excluded``.

    Ties go to the smaller item index.
    """
    candidates = np.ones(scores.size, dtype=bool)
    candidates[excluded] = False
    pool = np.flatnonzero(candidates)
    if pool.size > n:
        values = scores[pool]
        kth = np.partition(values, pool.size - n)[pool.size - n]
        pool = pool[values >= kth]
    order = np.lexsort((pool, -scores[pool]))
    return pool[order[:n]]


def rank_rows(
    rows: np.ndarray,
    start: int,
    g_train: BipartiteGraph,
    n: int,
    exclude_train: bool = True,
) -> List[RankedList]:
    """Ranked lists for the users ``start .. start + len(rows)``."""
    train = g_train.user_rows
    empty = np.zeros(0, dtype=np.int64)
    lists = []
    for local, scores in enumerate(rows):
        user = start + local
        excluded = train.indices[train.indptr[user]:train.indptr[user + 1]] if exclude_train else empty
        items = rank_row(scores, excluded, n)
        lists.append(RankedList(user=user, items=items, scores=scores[items]))
    return lists


def top_n(
    S: ScoreMatrix,
    g_train: BipartiteGraph,
    n: int = 20,
    exclude_train: bool = True,
    workers: Optional[int] = None,
) -> List[RankedList]:
    """The ``n`` best items of every user, skipping items the user has in train."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if (S.n_users, S.n_items) != (g_train.n_users, g_train.n_items):
        raise ValueError(
            f"score matrix is {S.n_users}x{S.n_items}, graph is {g_train.n_users}x{g_train.n_items}"
        )

    def rank(bounds):
        start, stop = bounds
        return rank_rows(np.asarray(S.values[start:stop]), start, g_train, n, exclude_train)

    ranked: List[RankedList] = []
    for part in ordered_map(rank, block_ranges(S.n_users, settings.block_size), workers or settings.workers):
        ranked.extend(part)
    return ranked


def write_ranked_lists(
    lists: Iterable[RankedList],
    path: Union[str, Path],
    fmt: str = "lines",
    with_scores: bool = False,
    item_labels: Optional[Sequence[str]] = None,
):
    """Write ranked lists as ``u: i1 i2 ...`` lines or as a ``user,rank,item,score`` CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def name(item: int) -> str:
        return item_labels[item] if item_labels is not None else str(int(item))

    if fmt == "csv":
        records = [
            {"user": r.user, "rank": rank, "item": name(item), "score": float(score)}
            for r in lists
            for rank, (item, score) in enumerate(zip(r.items, r.scores), start=1)
        ]
        pd.DataFrame(records, columns=["user", "rank", "item", "score"]).to_csv(
            path, index=False, float_format="%.12g"
        )
    elif fmt == "lines":
        with open(path, "w", encoding="utf-8") as fh:
            for r in lists:
                if with_scores:
                    tokens = [f"{name(i)}:{s:.6g}" for i, s in zip(r.items, r.scores)]
                else:
                    tokens = [name(i) for i in r.items]
                fh.write(f"{r.user}: {' '.join(tokens)}".rstrip() + "\n")
    else:
        raise ValueError(f"unknown ranked list format {fmt!r}; expected 'lines' or 'csv'")
    logger.info(f"Wrote ranked lists to {path}")
