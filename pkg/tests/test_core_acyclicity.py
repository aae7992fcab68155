import itertools

import networkx as nx
import numpy as np
import pytest

from app.core import tensor as T


def off_diagonal_graphs(n):
    slots = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in itertools.product((0.0, 1.0), repeat=len(slots)):
        adjacency = np.zeros((n, n))
        for (i, j), bit in zip(slots, bits):
            adjacency[i, j] = bit
        yield adjacency


@pytest.mark.parametrize("n", [2, 3])
def test_penalty_is_zero_exactly_for_acyclic_graphs(n):
    for adjacency in off_diagonal_graphs(n):
        acyclic = nx.is_directed_acyclic_graph(nx.from_numpy_array(adjacency, create_using=nx.DiGraph))
        penalty = T.acyclicity_penalty(adjacency, 1.0 / n).item()
        if acyclic:
            assert penalty == pytest.approx(0.0, abs=1e-12)
        else:
            assert penalty > 1e-6


def test_penalty_is_zero_for_random_four_node_dags():
    rng = np.random.default_rng(0)
    for _ in range(50):
        order = rng.permutation(4)
        weights = np.triu(rng.normal(size=(4, 4)), k=1) * (rng.random((4, 4)) < 0.6)
        adjacency = weights[np.ix_(order, order)]
        assert T.acyclicity_penalty(adjacency, 0.25).item() == pytest.approx(0.0, abs=1e-10)


def test_penalty_is_non_negative():
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert T.acyclicity_penalty(rng.normal(size=(5, 5)), 0.2).item() >= 0.0
