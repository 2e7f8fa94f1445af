"""Similarity matrix exports.

Binary layout (little endian)::

    magic       8 bytes   b"SAPSIM01"
    layer       uint8     0 = users, 1 = items
    metric      uint8     position in ``Metric``
    n           uint64    node count
    truncation  int64     top-k setting, -1 when untruncated
    nnz         uint64    stored entries
    indptr      (n + 1) x int64
    indices     nnz x int32
    data        nnz x float64
"""
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from graph_core.bipartite import Layer
from similarity.kernels import METRIC_IDS
from similarity.matrix import SimilarityMatrix
from utils.errors import DataError

logger = logging.getLogger(__name__)

MAGIC = b"SAPSIM01"
HEADER = struct.Struct("<8sBBQqQ")
LAYER_IDS = {Layer.USERS: 0, Layer.ITEMS: 1}

PathLike = Union[str, Path]


def write_similarity_csv(B: SimilarityMatrix, path: PathLike):
    """One ``i,j,value`` row per stored entry, row-major."""
    coo = B.values.tocoo()
    frame = pd.DataFrame({"i": coo.row, "j": coo.col, "value": coo.data})
    frame.sort_values(["i", "j"], kind="stable").to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(frame)} similarity entries to {path}")


def write_similarity_binary(B: SimilarityMatrix, path: PathLike):
    values = B.values
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(
            MAGIC,
            LAYER_IDS[B.layer],
            METRIC_IDS[B.metric],
            B.n,
            -1 if B.truncation is None else B.truncation,
            values.nnz,
        ))
        fh.write(values.indptr.astype("<i8").tobytes())
        fh.write(values.indices.astype("<i4").tobytes())
        fh.write(values.data.astype("<f8").tobytes())
    logger.info(f"Wrote binary similarity ({values.nnz} entries) to {path}")


def read_similarity_binary(path: PathLike) -> SimilarityMatrix:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
        if len(raw) != HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, layer_id, metric_id, n, truncation, nnz = HEADER.unpack(raw)
        if magic != MAGIC:
            raise DataError(f"{path}: not a similarity file")
        indptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8")
        indices = np.frombuffer(fh.read(4 * nnz), dtype="<i4")
        data = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
    if indptr.size != n + 1 or indices.size != nnz or data.size != nnz:
        raise DataError(f"{path}: truncated body")

    layers = {code: layer for layer, code in LAYER_IDS.items()}
    metrics = {code: metric for metric, code in METRIC_IDS.items()}
    if layer_id not in layers or metric_id not in metrics:
        raise DataError(f"{path}: unknown layer {layer_id} or metric {metric_id}")
    return SimilarityMatrix(
        layer=layers[layer_id],
        metric=metrics[metric_id],
        values=sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()), shape=(n, n)),
        truncation=None if truncation < 0 else int(truncation),
    )
