"""R-step random-walk kernel on attributed, weighted graphs.

For graphs ``(X, A)`` and ``(X', A')`` the kernel is

    K = sum_r mu_r * s^T (A kron A')^r s,    s = vec(X X'^T)

Because ``(A kron A') vec(W) = vec(A W A'^T)``, each step is two small matrix
products and the product graph is never built. Walk weights multiply edge
weights, so soft and coarsened adjacencies are handled as they are.

Two optional input transforms keep kernel values on a fixed scale whatever
the graph sizes and edge weights: ``adjacency_norm="sym"`` walks on
``D^-1/2 A D^-1/2``, and ``feature_norm="mass"`` gives every node feature
row length ``1/sqrt(N)``. With both, ``|K| <= R + 1``.

Graph arguments are anything with ``x`` and ``adj`` attributes (ndarrays or
tensors); results are 1x1 tensors, recorded when inputs are tracked.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ShapeError, ZeroSelfKernelError


@dataclass(frozen=True)
class KernelConfig:
    R: int = 3
    decay: tuple[float, ...] | None = None
    adjacency_norm: str = "none"
    feature_norm: str = "none"

    def __post_init__(self):
        if self.adjacency_norm not in ("none", "sym"):
            raise ValueError(f"adjacency_norm must be 'none' or 'sym', got {self.adjacency_norm!r}")
        if self.feature_norm not in ("none", "unit", "mass"):
            raise ValueError(f"feature_norm must be 'none', 'unit' or 'mass', got {self.feature_norm!r}")
        if self.R < 0:
            raise ValueError(f"R must be >= 0, got {self.R}")
        if self.decay is not None and len(self.decay) != self.R + 1:
            raise ValueError(f"decay needs R + 1 = {self.R + 1} entries, got {len(self.decay)}")

    def weight(self, r: int) -> float:
        return 1.0 if self.decay is None else float(self.decay[r])


DEGREE_EPS = 1e-9
ROW_EPS = 1e-12


@dataclass
class WalkGraph:
    """Features and the adjacency the walks actually traverse."""

    x: ad.Tensor
    adj: ad.Tensor


def sym_normalize(adj) -> ad.Tensor:
    """``D^-1/2 A D^-1/2`` with the degrees of ``A`` itself (no self-loops added)."""
    adj = ad.as_tensor(adj)
    inv = 1.0 / ad.sqrt(ad.sum_(adj, axis=1) + DEGREE_EPS)
    return adj * ad.matmul(inv, inv.T)


def scale_features(x, mode: str) -> ad.Tensor:
    """``unit``: rows of length 1; ``mass``: rows of length ``1/sqrt(N)``."""
    x = ad.as_tensor(x)
    if mode == "none":
        return x
    x = x / ad.sqrt(ad.sum_(x * x, axis=1) + ROW_EPS)
    return x * (1.0 / np.sqrt(x.rows)) if mode == "mass" else x


def walk_graph(g, config: KernelConfig) -> WalkGraph:
    """Apply the config's input transforms once, so later calls can use :func:`prepared`."""
    a = ad.as_tensor(g.adj)
    return WalkGraph(
        scale_features(g.x, config.feature_norm),
        sym_normalize(a) if config.adjacency_norm == "sym" else a,
    )


def prepared(config: KernelConfig) -> KernelConfig:
    """Config to use with graphs already passed through :func:`walk_graph`."""
    return replace(config, adjacency_norm="none", feature_norm="none")


def _transforms(config: KernelConfig) -> bool:
    return config.adjacency_norm != "none" or config.feature_norm != "none"


def rw_kernel(g1, g2, config: KernelConfig = KernelConfig()) -> ad.Tensor:
    if _transforms(config):
        g1, g2 = walk_graph(g1, config), walk_graph(g2, config)
    x1, a1 = ad.as_tensor(g1.x), ad.as_tensor(g1.adj)
    x2, a2 = ad.as_tensor(g2.x), ad.as_tensor(g2.adj)
    if x1.cols != x2.cols:
        raise ShapeError(f"feature dimensions differ: {x1.cols} vs {x2.cols}")
    s = ad.matmul(x1, x2.T)
    w = s
    total = ad.sum_(s * s) * config.weight(0) if config.weight(0) != 1.0 else ad.sum_(s * s)
    a2t = a2.T
    for r in range(1, config.R + 1):
        w = ad.matmul(ad.matmul(a1, w), a2t)
        term = ad.sum_(s * w)
        total = total + (term * config.weight(r) if config.weight(r) != 1.0 else term)
    return total


def block_diag(blocks: Sequence) -> ad.Tensor:
    """Square blocks (arrays or tensors) placed on the diagonal of one matrix."""
    blocks = [ad.as_tensor(b) for b in blocks]
    sizes = [b.rows for b in blocks]
    n = sum(sizes)
    rows, start = [], 0
    for b, size in zip(blocks, sizes):
        parts = []
        if start:
            parts.append(np.zeros((size, start)))
        parts.append(b)
        if n - start - size:
            parts.append(np.zeros((size, n - start - size)))
        rows.append(ad.concat_cols(parts) if len(parts) > 1 else b)
        start += size
    return ad.concat_rows(rows) if len(rows) > 1 else rows[0]


@dataclass
class GraphStack:
    """Disjoint union of graphs: stacked features, block-diagonal adjacency, block sizes."""

    x: ad.Tensor
    adj: ad.Tensor
    sizes: tuple[int, ...]

    @classmethod
    def of(cls, graphs: Sequence) -> GraphStack:
        xs = [ad.as_tensor(g.x) for g in graphs]
        return cls(
            ad.concat_rows(xs) if len(xs) > 1 else xs[0],
            block_diag([g.adj for g in graphs]),
            tuple(x.rows for x in xs),
        )

    def indicator(self) -> np.ndarray:
        out = np.zeros((sum(self.sizes), len(self.sizes)))
        start = 0
        for j, size in enumerate(self.sizes):
            out[start : start + size, j] = 1.0
            start += size
        return out


def stacked_kernel(g1: GraphStack, g2: GraphStack, config: KernelConfig = KernelConfig()) -> ad.Tensor:
    """Kernel between every block of ``g1`` and every block of ``g2`` in one pass.

    Powers of a block-diagonal adjacency stay block-diagonal, so the walk terms of
    different block pairs never mix; summing ``s * w`` over each block pair gives
    exactly the pairwise :func:`rw_kernel` values.
    """
    if _transforms(config):
        raise ValueError("stacked_kernel expects graphs already passed through walk_graph")
    if g1.x.cols != g2.x.cols:
        raise ShapeError(f"feature dimensions differ: {g1.x.cols} vs {g2.x.cols}")
    e1, e2 = g1.indicator(), g2.indicator()
    s = ad.matmul(g1.x, g2.x.T)
    w = s
    acc = s * s if config.weight(0) == 1.0 else s * s * config.weight(0)
    a2t = g2.adj.T
    for r in range(1, config.R + 1):
        w = ad.matmul(ad.matmul(g1.adj, w), a2t)
        acc = acc + (s * w if config.weight(r) == 1.0 else s * w * config.weight(r))
    return ad.matmul(ad.matmul(e1.T, acc), e2)


def normalize_kernel(k12, k11, k22) -> ad.Tensor:
    """``k12 / sqrt(k11 * k22)``; raises if either self-kernel is not positive."""
    k11, k22 = ad.as_tensor(k11), ad.as_tensor(k22)
    if k11.item() <= 0.0 or k22.item() <= 0.0:
        raise ZeroSelfKernelError(f"self-kernel must be positive, got {k11.item():.3g} and {k22.item():.3g}")
    return ad.as_tensor(k12) / ad.sqrt(k11 * k22)


def normalized_similarity(g1, g2, config: KernelConfig = KernelConfig()) -> ad.Tensor:
    return normalize_kernel(rw_kernel(g1, g2, config), rw_kernel(g1, g1, config), rw_kernel(g2, g2, config))


def distance_from_kernels(k12, k11, k22) -> ad.Tensor:
    """Kernel-space distance ``sqrt(max(0, (k11 + k22) / 2 - k12))``."""
    return ad.sqrt(ad.maximum(0.5 * (ad.as_tensor(k11) + k22) - k12, 0.0))


def kernel_distance(g1, g2, config: KernelConfig = KernelConfig()) -> ad.Tensor:
    return distance_from_kernels(rw_kernel(g1, g2, config), rw_kernel(g1, g1, config), rw_kernel(g2, g2, config))


def kernel_matrix(graphs: Sequence, config: KernelConfig = KernelConfig(), others: Sequence | None = None) -> np.ndarray:
    """Plain-array Gram matrix between ``graphs`` and ``others`` (defaults to ``graphs``)."""
    if others is None:
        n = len(graphs)
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                out[i, j] = out[j, i] = rw_kernel(graphs[i], graphs[j], config).item()
        return out
    return np.array([[rw_kernel(g, h, config).item() for h in others] for g in graphs])


def distance_matrix(graphs: Sequence, config: KernelConfig = KernelConfig(), others: Sequence | None = None) -> np.ndarray:
    if others is None:
        k = kernel_matrix(graphs, config)
        diag = np.diag(k)
        return np.sqrt(np.maximum(0.0, 0.5 * (diag[:, None] + diag[None, :]) - k))
    k = kernel_matrix(graphs, config, others)
    d1 = np.array([rw_kernel(g, g, config).item() for g in graphs])
    d2 = np.array([rw_kernel(h, h, config).item() for h in others])
    return np.sqrt(np.maximum(0.0, 0.5 * (d1[:, None] + d2[None, :]) - k))
