"""Shared fixtures: hand-built graphs, seeded random graphs, file writers."""
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest

from graph_core.bipartite import BipartiteGraph


def build_random_graph(n_users: int, n_items: int, density: float = 0.2, seed: int = 0) -> BipartiteGraph:
    rng = np.random.default_rng(seed)
    dense = rng.random((n_users, n_items)) < density
    users, items = np.nonzero(dense)
    return BipartiteGraph.from_edges(users, items, n_users=n_users, n_items=n_items)


def build_pair_graph(n_total: int, k_i: int, k_j: int, co: int) -> BipartiteGraph:
    """Two users over ``n_total`` items with the given degrees and overlap."""
    i_items = list(range(k_i))
    j_items = list(range(k_i - co, k_i - co + k_j))
    users = [0] * len(i_items) + [1] * len(j_items)
    return BipartiteGraph.from_edges(users, i_items + j_items, n_users=2, n_items=n_total)


@pytest.fixture
def tiny_graph() -> BipartiteGraph:
    # edges (0,0), (0,1), (1,0)
    return BipartiteGraph.from_edges([0, 0, 1], [0, 1, 0])


@pytest.fixture
def random_graph() -> Callable[..., BipartiteGraph]:
    return build_random_graph


@pytest.fixture
def pair_graph() -> Callable[..., BipartiteGraph]:
    return build_pair_graph


@pytest.fixture
def write_lines(tmp_path) -> Callable[[str, Sequence[str]], Path]:
    def write(name: str, lines: Sequence[str]) -> Path:
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    return write
