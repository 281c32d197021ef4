"""Graph containers, adjacency normalization and stratified splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import autodiff as ad
from .errors import DataError, ShapeError

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Node features ``x`` (N x d), weighted adjacency ``adj`` (N x N) and an optional label."""

    x: np.ndarray
    adj: np.ndarray
    label: int | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        adj = np.asarray(self.adj, dtype=np.float64)
        if x.ndim != 2 or adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ShapeError(f"bad graph shapes: x {x.shape}, adj {adj.shape}")
        if x.shape[0] != adj.shape[0]:
            raise ShapeError(f"x has {x.shape[0]} rows but adj is {adj.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "adj", adj)

    @property
    def num_nodes(self) -> int:
        return self.adj.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.adj, 1)))

    def permuted(self, perm: Sequence[int]) -> AttributedGraph:
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        p = np.asarray(perm)
        return AttributedGraph(self.x[p], self.adj[np.ix_(p, p)], self.label, dict(self.meta))


@dataclass(frozen=True, eq=False)
class GraphDataset:
    graphs: list[AttributedGraph]
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.num_classes < 2:
            raise DataError(f"a dataset needs at least 2 classes, got {self.num_classes}")
        dims = {g.feature_dim for g in self.graphs}
        if len(dims) > 1:
            raise DataError(f"graphs disagree on feature dimension: {sorted(dims)}")
        for i, g in enumerate(self.graphs):
            if g.label is not None and not 0 <= g.label < self.num_classes:
                raise DataError(f"graph {i} has label {g.label} outside 0..{self.num_classes - 1}")

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim if self.graphs else 0

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs])

    def subset(self, indices: Sequence[int]) -> list[AttributedGraph]:
        return [self.graphs[i] for i in indices]


@dataclass(frozen=True)
class SplitSpec:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int

    def to_dict(self) -> dict:
        return {"train": self.train, "val": self.val, "test": self.test, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> SplitSpec:
        return cls([int(i) for i in d["train"]], [int(i) for i in d["val"]], [int(i) for i in d["test"]], int(d["seed"]))


def check_symmetric(adj: np.ndarray, tol: float = SYMMETRY_TOL):
    if adj.shape[0] != adj.shape[1]:
        raise ShapeError(f"adjacency must be square, got {adj.shape}")
    dev = float(np.max(np.abs(adj - adj.T))) if adj.size else 0.0
    if dev > tol:
        raise ShapeError(f"adjacency is not symmetric (max deviation {dev:.3g})")


def normalize_adjacency(adj):
    """Symmetric normalization with self-loops, ``D^-1/2 (A + I) D^-1/2``.

    Accepts an ndarray (returns an ndarray) or a Tensor (returns a recorded Tensor).
    """
    if isinstance(adj, ad.Tensor):
        check_symmetric(adj.value, tol=1e-9)
        a_hat = adj + np.eye(adj.rows)
        deg = ad.sum_(a_hat, axis=1)
        inv_sqrt = 1.0 / ad.sqrt(deg)
        return a_hat * (inv_sqrt @ inv_sqrt.T)
    adj = np.asarray(adj, dtype=np.float64)
    check_symmetric(adj)
    if (adj < 0).any():
        raise ValueError("adjacency must be non-negative")
    a_hat = adj + np.eye(adj.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    out = a_hat * np.outer(inv_sqrt, inv_sqrt)
    return 0.5 * (out + out.T)


def degree_one_hot(adj: np.ndarray, max_degree: int) -> np.ndarray:
    """One-hot of node degree, capped so degrees above ``max_degree`` share the last bin."""
    deg = np.count_nonzero(adj, axis=1)
    deg = np.minimum(deg, max_degree)
    out = np.zeros((adj.shape[0], max_degree + 1))
    out[np.arange(adj.shape[0]), deg] = 1.0
    return out


def _largest_remainder(quotas: np.ndarray, total: int, caps: np.ndarray) -> np.ndarray:
    """Integer allocation near ``quotas`` summing to ``total`` without exceeding ``caps``."""
    out = np.minimum(np.floor(quotas).astype(int), caps)
    order = np.argsort(-(quotas - np.floor(quotas)), kind="stable")
    i = 0
    while out.sum() < total and i < 10 * len(order):
        c = order[i % len(order)]
        if out[c] < caps[c]:
            out[c] += 1
        i += 1
    return out


def split_dataset(
    dataset: GraphDataset | Sequence[int],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitSpec:
    """Stratified train/val/test split.

    ``dataset`` may be a GraphDataset or a plain sequence of labels. Split sizes
    are ``round(ratio * M)`` overall, and the held-out graphs are spread over
    classes by largest remainder so each class's train share is within one graph
    of its ratio. Every class keeps at least one training graph.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    labels = dataset.labels if isinstance(dataset, GraphDataset) else np.asarray(dataset)
    classes, counts = np.unique(labels, return_counts=True)
    for c, n in zip(classes, counts):
        if n < 3:
            raise DataError(f"class {c} has {n} graphs; need at least one per split")
    m = len(labels)
    n_val = int(round(ratios[1] * m))
    n_test = int(round(ratios[2] * m))
    held_frac = ratios[1] + ratios[2]
    held = _largest_remainder(held_frac * counts, n_val + n_test, counts - 1)
    val_c = _largest_remainder(held * ratios[1] / held_frac, n_val, held)

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for c, h, v in zip(classes, held, val_c):
        idx = rng.permutation(np.flatnonzero(labels == c))
        val.extend(idx[:v].tolist())
        test.extend(idx[v:h].tolist())
        train.extend(idx[h:].tolist())
    return SplitSpec(sorted(train), sorted(val), sorted(test), seed)
