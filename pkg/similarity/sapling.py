"""Decision Saplings and the Sapling Similarity of a single node pair."""
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict

import numpy as np

from graph_core.bipartite import BipartiteGraph, Layer, degrees
from utils.errors import DataError, SingularSaplingError

logger = logging.getLogger(__name__)


def gini_impurity(p1: float) -> float:
    """Gini impurity 1 - p1² - p0² = 2·p1·(1 - p1) of a two-class box."""
    if not 0.0 <= p1 <= 1.0:
        raise ValueError(f"p1 must lie in [0, 1], got {p1}")
    return 2.0 * p1 * (1.0 - p1)


@dataclass(frozen=True)
class DecisionSapling:
    """One-split tree of node i with respect to node j.

    The bean counts the N opposite-layer nodes split by whether i links to
    them; the right leaf restricts to the k_j nodes j links to, the left leaf
    to the N - k_j it does not.
    """
    n_total: int
    bean_pos: int
    bean_neg: int
    right_pos: int
    right_neg: int
    left_pos: int
    left_neg: int

    @classmethod
    def from_counts(cls, n_total: int, k_i: int, k_j: int, co: int) -> "DecisionSapling":
        if not (0 <= k_i <= n_total and 0 <= k_j <= n_total):
            raise DataError(f"degrees ({k_i}, {k_j}) out of range for N={n_total}")
        if not max(0, k_i + k_j - n_total) <= co <= min(k_i, k_j):
            raise DataError(f"co-occurrence {co} impossible for N={n_total}, k_i={k_i}, k_j={k_j}")
        return cls(
            n_total=n_total,
            bean_pos=k_i,
            bean_neg=n_total - k_i,
            right_pos=co,
            right_neg=k_j - co,
            left_pos=k_i - co,
            left_neg=n_total - k_j - k_i + co,
        )

    @property
    def k_i(self) -> int:
        return self.bean_pos

    @property
    def k_j(self) -> int:
        return self.right_pos + self.right_neg

    @property
    def co(self) -> int:
        return self.right_pos

    @property
    def bean_fraction(self) -> float:
        return self.bean_pos / self.n_total if self.n_total else float("nan")

    @property
    def right_fraction(self) -> float:
        return self.right_pos / self.k_j if self.k_j else float("nan")

    @property
    def left_fraction(self) -> float:
        size = self.n_total - self.k_j
        return self.left_pos / size if size else float("nan")

    @property
    def right_weight(self) -> float:
        """Share of the N nodes that fall in the right leaf."""
        return self.k_j / self.n_total if self.n_total else float("nan")

    @property
    def left_weight(self) -> float:
        """Share of the N nodes that fall in the left leaf."""
        return (self.n_total - self.k_j) / self.n_total if self.n_total else float("nan")

    @property
    def is_singular(self) -> bool:
        return self.k_i in (0, self.n_total) or self.k_j in (0, self.n_total)

    def fractions(self) -> Dict[str, float]:
        return {
            "bean": self.bean_fraction,
            "right_leaf": self.right_fraction,
            "left_leaf": self.left_fraction,
            "right_weight": self.right_weight,
            "left_weight": self.left_weight,
        }

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["fractions"] = self.fractions()
        return data


def decision_sapling(g: BipartiteGraph, layer: Layer, i: int, j: int) -> DecisionSapling:
    """Decision Sapling of node ``i`` with respect to node ``j`` on ``layer``."""
    layer = Layer(layer)
    n = g.layer_size(layer)
    for index in (i, j):
        if not 0 <= index < n:
            raise IndexError(f"{layer.value} index {index} out of range [0, {n})")
    if i == j:
        raise ValueError("a Decision Sapling needs two distinct nodes")

    k = degrees(g, layer).counts
    shared = np.intersect1d(g.neighbors(layer, i), g.neighbors(layer, j), assume_unique=True)
    return DecisionSapling.from_counts(g.universe_size(layer), int(k[i]), int(k[j]), int(shared.size))


def delta_gini(ds: DecisionSapling) -> float:
    """Relative Gini impurity reduction of the split, evaluated box by box.

    This is the direct definition; ``sapling_value`` is its closed form.
    """
    if ds.is_singular:
        raise SingularSaplingError(
            f"ΔGI is singular for N={ds.n_total}, k_i={ds.k_i}, k_j={ds.k_j}"
        )
    gi_bean = gini_impurity(ds.bean_fraction)
    gi_right = gini_impurity(ds.right_fraction)
    gi_left = gini_impurity(ds.left_fraction)
    return (gi_bean - ds.left_weight * gi_left - ds.right_weight * gi_right) / gi_bean


def sapling_value(n: int, k_i: int, k_j: int, co: int) -> float:
    """Signed Sapling Similarity from the four counts.

    1 - f_ij reduces to (N·CO - k_i·k_j)² / (k_i·k_j·(N-k_i)·(N-k_j)), which is
    evaluated in exact integers; the sign is that of CO·N - k_i·k_j.
    Singular degrees (0 or N) give 0.
    """
    n, k_i, k_j, co = int(n), int(k_i), int(k_j), int(co)
    if k_i in (0, n) or k_j in (0, n):
        return 0.0
    if not max(0, k_i + k_j - n) <= co <= min(k_i, k_j):
        raise DataError(f"co-occurrence {co} impossible for N={n}, k_i={k_i}, k_j={k_j}")
    excess = n * co - k_i * k_j
    if excess == 0:
        return 0.0
    magnitude = (excess * excess) / (k_i * k_j * (n - k_i) * (n - k_j))
    return magnitude if excess > 0 else -magnitude
