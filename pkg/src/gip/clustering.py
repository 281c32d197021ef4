"""Learned soft clustering, its normalized-cut and balance penalties, and graph coarsening."""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .encoder import GcnParams, MlpParams, gcn_forward, mlp_forward
from .errors import ShapeError
from .graphs import AttributedGraph, normalize_adjacency

CUT_EPS = 1e-9
ROW_NORM_EPS = 1e-12


@dataclass(frozen=True)
class CompressionConfig:
    num_blocks: int = 1
    ratio: float = 0.1
    delta1_rel: float = 0.05
    normalize_cluster_features: bool = True

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ValueError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must lie in (0, 1), got {self.ratio}")
        if self.delta1_rel < 0:
            raise ValueError(f"delta1_rel must be >= 0, got {self.delta1_rel}")

    def sizes(self, n: int) -> list[int]:
        """Node counts after each block for an ``n``-node input."""
        out = []
        for _ in range(self.num_blocks):
            n = num_clusters(n, self.ratio)
            out.append(n)
        return out


@dataclass
class CoarsenedGraph:
    x: ad.Tensor
    adj: ad.Tensor
    assignments: list[ad.Tensor] = field(default_factory=list)
    cluster_loss: ad.Tensor | None = None
    balance_loss: ad.Tensor | None = None

    @property
    def num_nodes(self) -> int:
        return self.adj.rows


def num_clusters(n: int, ratio: float) -> int:
    return max(2, math.ceil(ratio * n))


def assign_clusters(z, mlp1: MlpParams, k: int | None = None) -> ad.Tensor:
    """Row-softmax of the MLP logits; with ``k`` only the first ``k`` outputs are used."""
    logits = mlp_forward(z, mlp1)
    k = logits.cols if k is None else k
    if k < 2:
        raise ValueError(f"need at least 2 clusters, got {k}")
    if k > logits.cols:
        raise ShapeError(f"asked for {k} clusters but the assignment head has {logits.cols} outputs")
    if k > logits.rows:
        raise ValueError(f"more clusters ({k}) than nodes ({logits.rows})")
    if k < logits.cols:
        logits = ad.slice_(logits, cols=slice(0, k))
    return ad.row_softmax(logits)


def cluster_loss(s, adj, eps: float = CUT_EPS) -> ad.Tensor:
    """Relaxed K-way normalized cut, ``mean_k (S_k^T L S_k) / (S_k^T D S_k + eps)``."""
    s, adj = ad.as_tensor(s), ad.as_tensor(adj)
    deg = ad.sum_(adj, axis=1)
    lap_s = deg * s - ad.matmul(adj, s)
    num = ad.sum_(s * lap_s, axis=0)
    den = ad.sum_(s * s * deg, axis=0)
    return ad.sum_(num / (den + eps)) * (1.0 / s.cols)


def balance_loss(s) -> ad.Tensor:
    """``sqrt(K)/N * ||column sums of S|| - 1``; zero exactly at equal cluster sizes."""
    s = ad.as_tensor(s)
    n, k = s.shape
    return ad.frobenius_norm(ad.sum_(s, axis=0)) * (math.sqrt(k) / n) - 1.0


def coarsen_block(z, adj, s) -> tuple[ad.Tensor, ad.Tensor]:
    """Pool features ``S^T Z`` and adjacency ``S^T A S`` (symmetrized)."""
    z, adj, s = ad.as_tensor(z), ad.as_tensor(adj), ad.as_tensor(s)
    if not (z.rows == adj.rows == adj.cols == s.rows):
        raise ShapeError(f"coarsen_block: Z {z.shape}, A {adj.shape}, S {s.shape} disagree")
    st = s.T
    x_new = ad.matmul(st, z)
    a_new = ad.matmul(ad.matmul(st, adj), s)
    return x_new, 0.5 * (a_new + a_new.T)


def relative_threshold(adj_value: np.ndarray, delta1_rel: float) -> float:
    off = adj_value[~np.eye(adj_value.shape[0], dtype=bool)]
    return delta1_rel * float(off.max()) if off.size else 0.0


def filter_edges(adj, delta1: float) -> ad.Tensor:
    """Zero the diagonal, then keep entries strictly above ``delta1``.

    The mask is a constant, so gradients reach only the retained entries.
    """
    adj = ad.as_tensor(adj)
    off = adj * (1.0 - np.eye(adj.rows))
    mask = (off.value > delta1).astype(np.float64)
    return off * mask


def row_normalize(x) -> ad.Tensor:
    x = ad.as_tensor(x)
    return x / ad.sqrt(ad.sum_(x * x, axis=1) + ROW_NORM_EPS)


_norm_cache: "weakref.WeakKeyDictionary[AttributedGraph, np.ndarray]" = weakref.WeakKeyDictionary()


def cached_normalized_adjacency(graph: AttributedGraph) -> np.ndarray:
    a = _norm_cache.get(graph)
    if a is None:
        a = normalize_adjacency(graph.adj)
        _norm_cache[graph] = a
    return a


def _head_width(mlp: MlpParams) -> int:
    return mlp.weights[-1].shape[1]


def compress(
    graph: AttributedGraph,
    encoders: Sequence[GcnParams],
    mlp1s: Sequence[MlpParams],
    config: CompressionConfig = CompressionConfig(),
) -> CoarsenedGraph:
    """Stack ``config.num_blocks`` encode/assign/coarsen blocks, then filter edges.

    Block ``b`` uses ``K = max(2, ceil(ratio * N))`` clusters, capped at the width
    of its assignment head. Block losses are summed over blocks.
    """
    if graph.num_nodes < 2:
        raise ValueError(f"cannot compress a graph with {graph.num_nodes} node(s)")
    if len(encoders) != config.num_blocks or len(mlp1s) != config.num_blocks:
        raise ValueError(f"need {config.num_blocks} encoders and assignment heads")
    x = ad.as_tensor(graph.x)
    adj = ad.as_tensor(graph.adj)
    a_norm = cached_normalized_adjacency(graph)
    assignments = []
    l_clu = l_bal = None
    for block in range(config.num_blocks):
        if block > 0:
            a_norm = normalize_adjacency(adj)
        z = gcn_forward(x, a_norm, encoders[block])
        k = min(num_clusters(adj.rows, config.ratio), _head_width(mlp1s[block]))
        s = assign_clusters(z, mlp1s[block], k)
        c, b = cluster_loss(s, adj), balance_loss(s)
        l_clu = c if l_clu is None else l_clu + c
        l_bal = b if l_bal is None else l_bal + b
        x, adj = coarsen_block(z, adj, s)
        assignments.append(s)
    adj = filter_edges(adj, relative_threshold(adj.value, config.delta1_rel))
    if config.normalize_cluster_features:
        x = row_normalize(x)
    return CoarsenedGraph(x, adj, assignments, l_clu, l_bal)
