"""Projection of the bipartite network onto one layer through its similarities."""
import logging
from pathlib import Path
from typing import Union

import networkx as nx
import numpy as np

from similarity.matrix import SimilarityMatrix

logger = logging.getLogger(__name__)


def project_network(B: SimilarityMatrix, k: int = 4) -> nx.DiGraph:
    """Directed similarity network: every node points to its k most similar peers.

    Peers are ranked by signed similarity (absent entries count as 0), ties
    to the smaller index; the out-degree is capped at n - 1. Edge attribute
    ``weight`` carries the similarity, node attribute ``label`` the node label.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    graph = nx.DiGraph(layer=B.layer.value, metric=B.metric.value, k=k)
    labels = B.labels or tuple(str(i) for i in range(B.n))
    for node in range(B.n):
        graph.add_node(node, label=labels[node])

    for node in range(B.n):
        row = B.values[node].toarray().ravel()
        peers = np.delete(np.arange(B.n), node)
        scores = np.delete(row, node)
        order = np.lexsort((peers, -scores))[:k]
        for position in order:
            graph.add_edge(node, int(peers[position]), weight=float(scores[position]))

    logger.info(f"Projected {B.n} {B.layer.value} into {graph.number_of_edges()} directed edges (k={k})")
    return graph


def write_projection_csv(graph: nx.DiGraph, path: Union[str, Path]):
    """Write ``src,dst,weight`` rows using node labels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = nx.get_node_attributes(graph, "label")
    frame = nx.to_pandas_edgelist(graph, source="src", target="dst")
    if frame.empty:
        frame = frame.reindex(columns=["src", "dst", "weight"])
    else:
        frame = frame[["src", "dst", "weight"]]
        frame["src"] = frame["src"].map(labels)
        frame["dst"] = frame["dst"].map(labels)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote projection with {len(frame)} edges to {path}")
