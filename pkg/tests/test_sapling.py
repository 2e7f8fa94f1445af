import math
import time

import numpy as np
import pytest

from graph_core.bipartite import Layer
from similarity.sapling import (DecisionSapling, decision_sapling, delta_gini, gini_impurity,
                                sapling_value)
from utils.errors import DataError, SingularSaplingError


def random_counts(rng, n_max=200):
    n = int(rng.integers(2, n_max + 1))
    k_i = int(rng.integers(1, n))
    k_j = int(rng.integers(1, n))
    co = int(rng.integers(max(0, k_i + k_j - n), min(k_i, k_j) + 1))
    return n, k_i, k_j, co


def binary_vectors(n, k_i, k_j, co):
    a = np.zeros(n)
    b = np.zeros(n)
    a[:k_i] = 1
    b[k_i - co:k_i - co + k_j] = 1
    return a, b


class TestGiniImpurity:
    @pytest.mark.parametrize("p1, expected", [(0.5, 0.5), (0.0, 0.0), (0.05, 0.095)])
    def test_values(self, p1, expected):
        assert gini_impurity(p1) == pytest.approx(expected, abs=1e-15)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            gini_impurity(1.5)


class TestDecisionSapling:
    def test_sparse_instance(self, pair_graph):
        ds = decision_sapling(pair_graph(100, 5, 5, 2), Layer.USERS, 0, 1)
        assert (ds.bean_pos, ds.bean_neg) == (5, 95)
        assert (ds.right_pos, ds.right_neg) == (2, 3)
        assert (ds.left_pos, ds.left_neg) == (3, 92)

    def test_dense_instance(self, pair_graph):
        ds = decision_sapling(pair_graph(8, 5, 5, 2), Layer.USERS, 0, 1)
        assert (ds.bean_pos, ds.bean_neg) == (5, 3)
        assert (ds.right_pos, ds.right_neg) == (2, 3)
        assert (ds.left_pos, ds.left_neg) == (3, 0)
        assert ds.bean_fraction == 0.625

    def test_identical_neighbours_give_pure_leaves(self, pair_graph):
        ds = decision_sapling(pair_graph(20, 6, 6, 6), Layer.USERS, 0, 1)
        assert (ds.right_pos, ds.right_neg) == (6, 0)
        assert (ds.left_pos, ds.left_neg) == (0, 14)

    def test_box_identities(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            ds = DecisionSapling.from_counts(*random_counts(rng))
            assert ds.bean_pos + ds.bean_neg == ds.n_total
            assert ds.right_pos + ds.left_pos == ds.bean_pos
            assert ds.left_pos + ds.left_neg == ds.n_total - ds.k_j
            assert min(ds.right_neg, ds.left_pos, ds.left_neg) >= 0

    def test_same_node_rejected(self, pair_graph):
        with pytest.raises(ValueError):
            decision_sapling(pair_graph(10, 3, 3, 1), Layer.USERS, 1, 1)

    def test_index_out_of_range(self, pair_graph):
        with pytest.raises(IndexError):
            decision_sapling(pair_graph(10, 3, 3, 1), Layer.USERS, 0, 2)

    def test_impossible_counts(self):
        with pytest.raises(DataError):
            DecisionSapling.from_counts(10, 3, 3, 4)


class TestDeltaGini:
    def test_sparse_instance(self):
        assert delta_gini(DecisionSapling.from_counts(100, 5, 5, 2)) == pytest.approx(0.135734, abs=1e-6)

    def test_independence(self):
        assert delta_gini(DecisionSapling.from_counts(10, 4, 5, 2)) == pytest.approx(0.0, abs=1e-15)

    def test_disjoint_and_covering(self):
        assert delta_gini(DecisionSapling.from_counts(10, 4, 6, 0)) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("counts", [(10, 0, 3, 0), (10, 10, 3, 3), (10, 3, 10, 3), (10, 3, 0, 0)])
    def test_singular(self, counts):
        with pytest.raises(SingularSaplingError):
            delta_gini(DecisionSapling.from_counts(*counts))


class TestSaplingValue:
    def test_sparse_instance_is_positive(self):
        assert sapling_value(100, 5, 5, 2) == pytest.approx(0.135734, abs=1e-5)

    def test_dense_instance_flips_sign(self):
        assert sapling_value(8, 5, 5, 2) == pytest.approx(-0.36, abs=1e-10)

    def test_boundaries_are_exact(self):
        assert sapling_value(30, 7, 7, 7) == 1.0
        assert sapling_value(10, 4, 6, 0) == -1.0
        assert sapling_value(10, 4, 5, 2) == 0.0

    def test_singular_degrees_give_zero(self):
        assert sapling_value(10, 0, 4, 0) == 0.0
        assert sapling_value(10, 10, 4, 4) == 0.0

    def test_symmetric_in_degrees(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            n, k_i, k_j, co = random_counts(rng)
            assert sapling_value(n, k_i, k_j, co) == sapling_value(n, k_j, k_i, co)

    def test_matches_box_by_box_evaluation(self):
        rng = np.random.default_rng(2)
        began = time.perf_counter()
        for _ in range(1000):
            n, k_i, k_j, co = random_counts(rng)
            value = sapling_value(n, k_i, k_j, co)
            oracle = delta_gini(DecisionSapling.from_counts(n, k_i, k_j, co))
            sign = 1.0 if co * n >= k_i * k_j else -1.0
            assert abs(value - sign * oracle) <= 1e-10
        assert time.perf_counter() - began < 1.0

    def test_sign_agrees_with_pearson(self):
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            n, k_i, k_j, co = random_counts(rng, n_max=60)
            value = sapling_value(n, k_i, k_j, co)
            a, b = binary_vectors(n, k_i, k_j, co)
            pearson = float(np.corrcoef(a, b)[0, 1])
            if n * co == k_i * k_j:
                assert value == 0.0
                assert pearson == pytest.approx(0.0, abs=1e-12)
            else:
                assert math.copysign(1.0, value) == math.copysign(1.0, pearson)
                assert value == pytest.approx(pearson * abs(pearson), abs=1e-9)

    def test_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            assert -1.0 <= sapling_value(*random_counts(rng)) <= 1.0
