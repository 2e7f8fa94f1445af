"""Deterministic block-parallel map."""
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, List, Tuple, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def block_ranges(n: int, block_size: int) -> List[Tuple[int, int]]:
    """Split ``range(n)`` into consecutive ``(start, stop)`` blocks."""
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    return [(start, min(start + block_size, n)) for start in range(0, n, block_size)]


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> Iterator[R]:
    """Apply ``fn`` to ``items`` on a thread pool, yielding results in input order.

    At most ``2 * workers`` results are in flight at a time, so memory stays
    bounded when each result is a large block.
    """
    if workers <= 1:
        for item in items:
            yield fn(item)
        return

    window = 2 * workers
    with ThreadPoolExecutor(max_workers=workers) as executor:
        pending = deque()
        for item in items:
            pending.append(executor.submit(fn, item))
            if len(pending) >= window:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def budgeted_block_size(block_size: int, bytes_per_row: int, concurrent: int, budget_mb: int) -> int:
    """Largest block size up to ``block_size`` for which ``concurrent`` blocks fit in ``budget_mb``."""
    if budget_mb < 1:
        raise ValueError(f"budget_mb must be >= 1, got {budget_mb}")
    fitting = (budget_mb * 2**20) // max(1, concurrent * bytes_per_row)
    return int(max(1, min(block_size, fitting)))
