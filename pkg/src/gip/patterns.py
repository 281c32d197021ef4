"""Learnable graph prototypes ("interactive patterns") and the losses that shape them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .encoder import MlpParams, mlp_forward
from .kernel import KernelConfig, distance_from_kernels, normalize_kernel, rw_kernel

EXPORT_EDGE_THRESHOLD = 0.5


@dataclass(frozen=True)
class MsLossConfig:
    gamma1: float = 2.0
    gamma2: float = 50.0
    margin: float = 1.0

    def __post_init__(self):
        if min(self.gamma1, self.gamma2, self.margin) <= 0:
            raise ValueError("gamma1, gamma2 and margin must be positive")


@dataclass
class InteractivePattern:
    class_id: int
    x: object
    adj: object

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    def binarized_adjacency(self, threshold: float = EXPORT_EDGE_THRESHOLD) -> np.ndarray:
        a = self.adj.value if isinstance(self.adj, ad.Tensor) else np.asarray(self.adj)
        return (a > threshold).astype(np.float64)


@dataclass
class PatternBank:
    patterns: list[InteractivePattern]
    num_classes: int

    def __post_init__(self):
        t, c = len(self.patterns), self.num_classes
        if t % c:
            raise ValueError(f"{t} patterns cannot be split evenly over {c} classes")
        per = t // c
        for i, p in enumerate(self.patterns):
            if p.class_id != i // per:
                raise ValueError("patterns must be ordered by class, T/C per class")

    def __len__(self):
        return len(self.patterns)

    def __getitem__(self, i):
        return self.patterns[i]

    @property
    def per_class(self) -> int:
        return len(self.patterns) // self.num_classes

    @property
    def class_ids(self) -> np.ndarray:
        return np.array([p.class_id for p in self.patterns])

    def of_class(self, c: int) -> list[int]:
        return [i for i, p in enumerate(self.patterns) if p.class_id == c]


@lru_cache(maxsize=64)
def _pair_selectors(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row ``i*n + j`` of the first matrix picks node ``i``, of the second node ``j``."""
    eye = np.eye(n)
    first = np.repeat(eye, n, axis=0)
    second = np.tile(eye, (n, 1))
    return first, second


def generate_pattern_adjacency(x_p, mlp2: MlpParams) -> ad.Tensor:
    """``sigmoid`` of the symmetrized pair scores ``MLP([x_i; x_j])``, zero diagonal."""
    x_p = ad.as_tensor(x_p)
    n = x_p.rows
    if n < 2:
        raise ValueError(f"a pattern needs at least 2 nodes, got {n}")
    first, second = _pair_selectors(n)
    pairs = ad.concat_cols([ad.matmul(first, x_p), ad.matmul(second, x_p)])
    raw = ad.reshape(mlp_forward(pairs, mlp2), n, n)
    return ad.sigmoid(0.5 * (raw + raw.T)) * (1.0 - np.eye(n))


def pattern_similarities(cg, bank: PatternBank, config: KernelConfig = KernelConfig()) -> ad.Tensor:
    """Raw kernel value between ``cg`` and each pattern, as a 1 x T row."""
    return ad.concat_cols([rw_kernel(cg, p, config) for p in bank.patterns])


def pattern_distances(k_cross: ad.Tensor, k_self_graph: ad.Tensor, k_self_patterns: ad.Tensor) -> ad.Tensor:
    """Kernel-space distances for one graph against all patterns (1 x T rows in, 1 x T out)."""
    return distance_from_kernels(k_cross, k_self_graph, k_self_patterns)


def _class_selector(pattern_classes: np.ndarray, label: int, positive: bool) -> np.ndarray:
    keep = np.flatnonzero((pattern_classes == label) == positive)
    sel = np.zeros((len(pattern_classes), len(keep)))
    sel[keep, np.arange(len(keep))] = 1.0
    return sel


def multi_similarity_loss(
    distances,
    labels: Sequence[int],
    pattern_classes: Sequence[int],
    config: MsLossConfig = MsLossConfig(),
) -> ad.Tensor:
    """Pull same-class pattern distances below the margin and push others above it.

    ``distances`` is an M x T tensor (or a list of M 1 x T rows) of kernel distances.
    """
    rows = distances if isinstance(distances, (list, tuple)) else [
        ad.slice_(distances, rows=slice(m, m + 1)) for m in range(ad.as_tensor(distances).rows)
    ]
    classes = np.asarray(pattern_classes)
    g1, g2, lam = config.gamma1, config.gamma2, config.margin
    total = None
    for row, y in zip(rows, labels):
        pos = ad.matmul(row, _class_selector(classes, y, True))
        term = ad.log1p_sum_exp((pos - lam) * g1) * (1.0 / g1)
        neg_sel = _class_selector(classes, y, False)
        if neg_sel.shape[1]:
            neg = ad.matmul(row, neg_sel)
            term = term + ad.log1p_sum_exp((neg - lam) * (-g2)) * (1.0 / g2)
        total = term if total is None else total + term
    return total * (1.0 / len(rows))


def diversity_loss(
    bank: PatternBank,
    config: KernelConfig = KernelConfig(),
    delta2: float = 0.5,
    self_kernels: Sequence | None = None,
    normalized: bool = True,
    gram: ad.Tensor | None = None,
) -> ad.Tensor:
    """Hinge ``max(0, sim(P_i, P_j) - delta2)`` over unordered same-class pattern pairs.

    A precomputed T x T pattern ``gram`` matrix replaces all kernel evaluations.
    """

    def entry(i, j):
        return ad.slice_(gram, rows=slice(i, i + 1), cols=slice(j, j + 1))

    if gram is not None:
        self_kernels = [entry(i, i) for i in range(len(bank))]
    elif self_kernels is None and normalized:
        self_kernels = [rw_kernel(p, p, config) for p in bank.patterns]
    total = ad.as_tensor(0.0)
    for c in range(bank.num_classes):
        idx = bank.of_class(c)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                i, j = idx[a], idx[b]
                k = entry(i, j) if gram is not None else rw_kernel(bank[i], bank[j], config)
                sim = normalize_kernel(k, self_kernels[i], self_kernels[j]) if normalized else k
                total = total + ad.maximum(sim - delta2, 0.0)
    return total
