"""Subcommand implementations. Each returns a JSON-friendly result dict."""
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from config import IngestionKind, RunConfig
from evaluation.benchmark import ingest_graph, run_benchmark
from evaluation.report import write_gamma_curve
from evaluation.tuning import DEFAULT_GRID, tune_gamma
from graph_core.bipartite import BipartiteGraph, Layer
from graph_core.filters import filter_min_degree
from graph_core.loaders import load_edge_list, write_edge_list, write_labels
from graph_core.split import holdout_validation_split
from similarity.io import write_similarity_binary, write_similarity_csv
from similarity.kernels import Metric
from similarity.matrix import similarity_matrix
from similarity.projection import project_network, write_projection_csv
from similarity.sapling import DecisionSapling, decision_sapling, delta_gini, sapling_value
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)


def load_input(
    path: Path,
    kind: str = "edges",
    input_format: str = "adjacency",
    threshold: float = 1.0,
    min_rating: float = 3.0,
    min_degree: int = 0,
) -> BipartiteGraph:
    return ingest_graph(IngestionKind(kind), Path(path), input_format, threshold, min_rating, min_degree)


def cmd_run(config: RunConfig) -> Dict[str, Any]:
    """Full pipeline: ingest, similarity, scores, evaluation, report files."""
    report = run_benchmark(config)
    result = report.model_dump(mode="json")
    result["path"] = str(config.output_dir / f"{report.stem}.report")
    return result


def cmd_tune(config: RunConfig) -> Dict[str, Any]:
    """γ sweep on the train data only; the test file is never opened."""
    if config.mode != "hybrid":
        raise ConfigError(f"tune needs mode = 'hybrid', got {config.mode!r}")
    if config.train_path is not None:
        train = filter_min_degree(load_edge_list(config.train_path, format=config.input_format), config.min_degree)
    else:
        train = ingest_graph(config.ingestion, config.raw_path, config.input_format,
                             config.rca_threshold, config.min_rating, config.min_degree)
    grid = config.tune_grid if config.tune_grid is not None else list(DEFAULT_GRID)
    curve = tune_gamma(
        train,
        Metric(config.metric),
        grid,
        seed=config.seed,
        fraction=config.test_fraction,
        k=config.k,
        topk=config.topk,
        include_self=config.include_self,
        block_size=config.block_size,
        workers=config.workers,
    )
    path = config.output_dir / f"{config.dataset}_{config.metric}_gamma.csv"
    write_gamma_curve(curve.points, path)
    return {
        "best_gamma": curve.best_gamma,
        "best_ndcg": curve.best_ndcg,
        "k": config.k,
        "n_evaluated": curve.n_evaluated,
        "n_skipped": curve.n_skipped,
        "points": [point.model_dump() for point in curve.points],
        "path": str(path),
    }


def cmd_similarity(
    g: BipartiteGraph,
    layer: str,
    metric: str,
    out: Path,
    out_format: str = "csv",
    topk: Optional[int] = None,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> Dict[str, Any]:
    """Compute one layer's similarity matrix and export it."""
    B = similarity_matrix(g, Layer(layer), Metric(metric), topk=topk, block_size=block_size, workers=workers)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out_format == "binary":
        write_similarity_binary(B, out)
    else:
        write_similarity_csv(B, out)
    return {
        "layer": B.layer.value,
        "metric": B.metric.value,
        "n": B.n,
        "nnz": int(B.values.nnz),
        "truncation": B.truncation,
        "path": str(out),
    }


def _annotation(ds: DecisionSapling, value: float) -> str:
    if ds.is_singular:
        return "degenerate node: degree 0 or N"
    if abs(value) == 1.0:
        return "pure leaves"
    if value == 0.0:
        return "no information gained"
    return ""


def explain_counts(n_total: int, k_i: int, k_j: int, co: int, node_a: str = "i", node_b: str = "j",
                   layer: str = "users") -> Dict[str, Any]:
    """Walk through the Decision Sapling built from raw counts."""
    ds = DecisionSapling.from_counts(n_total, k_i, k_j, co)
    value = sapling_value(n_total, k_i, k_j, co)
    excess = n_total * co - k_i * k_j
    result = ds.to_dict()
    result.update(
        node_a=node_a,
        node_b=node_b,
        layer=layer,
        delta_gini=None if ds.is_singular else delta_gini(ds),
        excess=excess,
        sign="positive" if excess > 0 else "negative" if excess < 0 else "zero",
        value=value,
        annotation=_annotation(ds, value),
    )
    return result


def cmd_explain(g: BipartiteGraph, layer: str, node_a: str, node_b: str) -> Dict[str, Any]:
    """Decision Sapling of two nodes given by label or index."""
    layer = Layer(layer)
    i, j = g.index_of(layer, node_a), g.index_of(layer, node_b)
    if i == j:
        raise DataError(f"explain needs two distinct {layer.value} nodes, got {node_a!r} and {node_b!r}")
    ds = decision_sapling(g, layer, i, j)
    return explain_counts(ds.n_total, ds.k_i, ds.k_j, ds.co, node_a=node_a, node_b=node_b, layer=layer.value)


def cmd_project(g: BipartiteGraph, layer: str, metric: str, out: Path, k: int = 4,
                workers: Optional[int] = None) -> Dict[str, Any]:
    """Top-k similarity network of one layer as a ``src,dst,weight`` CSV."""
    layer = Layer(layer)
    out = Path(out)
    if g.n_edges == 0 or g.layer_size(layer) < 2:
        logger.warning(f"Nothing to project: {g!r}; writing an empty edge list")
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("src,dst,weight\n", encoding="utf-8")
        return {"layer": layer.value, "metric": metric, "k": k, "nodes": g.layer_size(layer), "edges": 0,
                "path": str(out)}

    B = similarity_matrix(g, layer, Metric(metric), workers=workers)
    network = project_network(B, k=k)
    write_projection_csv(network, out)
    return {
        "layer": layer.value,
        "metric": B.metric.value,
        "k": k,
        "nodes": network.number_of_nodes(),
        "edges": network.number_of_edges(),
        "path": str(out),
    }


def cmd_split(g: BipartiteGraph, out_dir: Path, fraction: float = 0.10, seed: int = 0) -> Dict[str, Any]:
    """Hold out a fraction of every user's items; write train and test edge lists."""
    split = holdout_validation_split(g, fraction=fraction, seed=seed)
    out_dir = Path(out_dir)
    train_path, test_path = out_dir / "train.txt", out_dir / "test.txt"
    write_edge_list(split.train, train_path)
    write_edge_list(split.heldout, test_path)
    return {
        "train_edges": split.train.n_edges,
        "test_edges": split.heldout.n_edges,
        "train_path": str(train_path),
        "test_path": str(test_path),
        "fraction": fraction,
        "seed": seed,
    }


def cmd_ingest(g: BipartiteGraph, out: Path) -> Dict[str, Any]:
    """Write an ingested graph as adjacency lines plus label CSVs."""
    out = Path(out)
    write_edge_list(g, out)
    label_files = []
    for suffix, labels in (("users", g.user_labels), ("items", g.item_labels)):
        if labels is not None:
            path = out.with_suffix(f".{suffix}.csv")
            write_labels(labels, path)
            label_files.append(str(path))
    return {
        "n_users": g.n_users,
        "n_items": g.n_items,
        "n_edges": g.n_edges,
        "path": str(out),
        "label_files": label_files,
    }
