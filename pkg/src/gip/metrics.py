"""Classification and explanation metrics for a trained model."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.metrics import accuracy_score, f1_score, silhouette_samples

from . import autodiff as ad
from .encoder import GcnParams, glorot
from .errors import DataError, SingleClusterError
from .graphs import AttributedGraph, normalize_adjacency
from .kernel import GraphStack, normalized_similarity, prepared, stacked_kernel, walk_graph
from .model import ModelState, View, cross_entropy, pattern_arrays, pattern_context, predict_many
from .patterns import EXPORT_EDGE_THRESHOLD
from .synthetic import supergraph_adjacency
from .training import Adam

METRIC_KEYS = ("accuracy", "macro_f1", "explanation_accuracy", "consistency", "silhouette")


@dataclass
class MetricReport:
    accuracy: float
    macro_f1: float
    explanation_accuracy: float | None = None
    consistency: float | None = None
    silhouette: float | None = None

    def to_dict(self) -> dict:
        return {k: (None if v is None or (isinstance(v, float) and math.isnan(v)) else v) for k, v in asdict(self).items()}

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def classification_scores(y_true: Sequence[int], y_pred: Sequence[int], num_classes: int) -> tuple[float, float]:
    """Accuracy and macro-F1; a class never predicted contributes F1 = 0."""
    if len(y_true) == 0:
        raise ValueError("empty evaluation split")
    labels = list(range(num_classes))
    acc = accuracy_score(y_true, y_pred)
    f1 = f1_score(y_true, y_pred, labels=labels, average="macro", zero_division=0)
    return float(acc), float(f1)


def eval_accuracy_f1(state: ModelState, graphs: Sequence[AttributedGraph]) -> tuple[float, float]:
    if not graphs:
        raise ValueError("empty evaluation split")
    preds = [p[0] for p in predict_many(state, graphs)]
    return classification_scores([g.label for g in graphs], preds, state.num_classes)


# --- explanation accuracy probe ---------------------------------------------


@dataclass
class Probe:
    """Independent GCN graph classifier: 3 GCN layers, mean pooling, linear read-out."""

    gcn: GcnParams
    w_out: np.ndarray
    b_out: np.ndarray
    trained: bool = False

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, num_classes: int, hidden: int = 64, layers: int = 3) -> Probe:
        gcn = GcnParams.init(rng, [in_dim] + [hidden] * layers)
        return cls(gcn, glorot(rng, hidden, num_classes), np.zeros((1, num_classes)))

    def logits(self, x, adj, params=None) -> ad.Tensor:
        ws = self.gcn.weights if params is None else params[:-2]
        w_out, b_out = (self.w_out, self.b_out) if params is None else params[-2:]
        h = ad.as_tensor(x)
        a_norm = normalize_adjacency(adj)
        for w in ws:
            h = ad.relu(ad.matmul(a_norm, ad.matmul(h, w)))
        pooled = ad.sum_(h, axis=0) * (1.0 / h.rows)
        return ad.matmul(pooled, w_out) + b_out

    def probs(self, x, adj) -> np.ndarray:
        return ad.row_softmax(self.logits(x, adj)).value[0]

    def arrays(self) -> list[np.ndarray]:
        return list(self.gcn.weights) + [self.w_out, self.b_out]


def probe_input(x: np.ndarray, adj: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized features and an adjacency binarized at ``threshold``."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    x = x / np.where(norms > 0, norms, 1.0)
    return x, (np.asarray(adj) > threshold).astype(np.float64)


def coarsened_probe_inputs(state: ModelState, graphs: Sequence[AttributedGraph]) -> list[tuple[np.ndarray, np.ndarray, int]]:
    view = View(state)
    out = []
    for g in graphs:
        cg = view.compress(g)
        x, a = probe_input(cg.x.value, cg.adj.value, 0.0)
        out.append((x, a, g.label))
    return out


def train_probe(
    samples: Sequence[tuple[np.ndarray, np.ndarray, int]],
    num_classes: int,
    seed: int = 0,
    epochs: int = 100,
    lr: float = 0.01,
    batch_size: int = 32,
) -> Probe:
    """Fit a :class:`Probe` on ``(x, adj, label)`` samples with Adam and cross-entropy."""
    if not samples:
        raise ValueError("no samples to train the probe on")
    rng = np.random.default_rng(seed)
    probe = Probe.init(rng, samples[0][0].shape[1], num_classes)
    arrays = {f"p{i:02d}": a.copy() for i, a in enumerate(probe.arrays())}
    keys = sorted(arrays)
    opt = Adam(arrays, lr)
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(samples), batch_size):
            tape = ad.Tape()
            bound = [tape.param(arrays[k], k) for k in keys]
            loss = None
            idx = order[start : start + batch_size]
            for i in idx:
                x, a, y = samples[i]
                c = cross_entropy(probe.logits(x, a, bound), y)
                loss = c if loss is None else loss + c
            loss = loss * (1.0 / len(idx))
            grads = tape.backward(loss)
            opt.step(arrays, {k: grads[t] for k, t in zip(keys, bound)})
    vals = [arrays[k] for k in keys]
    return Probe(GcnParams(vals[:-2]), vals[-2], vals[-1], trained=True)


def eval_explanation_accuracy(state: ModelState, probe: Probe) -> float:
    """Mean probe confidence in each pattern's own class (patterns binarized at 0.5)."""
    if not probe.trained:
        raise ValueError("the explanation probe has not been trained")
    scores = []
    for p in pattern_arrays(state):
        x, a = probe_input(p.x, p.adj, EXPORT_EDGE_THRESHOLD)
        scores.append(probe.probs(x, a)[p.class_id])
    return float(np.mean(scores))


# --- consistency --------------------------------------------------------------


@dataclass
class _Unit:
    x: np.ndarray
    adj: np.ndarray


def _unit(adj: np.ndarray) -> _Unit:
    return _Unit(np.ones((adj.shape[0], 1)), np.asarray(adj, dtype=np.float64))


def eval_consistency(state: ModelState, graphs: Sequence[AttributedGraph]) -> float:
    """Macro-mean over classes of the mean normalized kernel similarity between each
    binarized pattern and the stored super-graphs of that class (unit features on both).
    """
    motifs: dict[int, list[_Unit]] = {}
    for g in graphs:
        meta = g.meta.get("supergraph")
        if meta is None:
            raise DataError("graph carries no super-graph metadata; consistency needs a synthetic dataset")
        motifs.setdefault(g.label, []).append(_unit(supergraph_adjacency(meta)))
    cfg = state.config.kernel
    per_class = []
    for c in range(state.num_classes):
        if c not in motifs:
            continue
        vals = []
        for p in pattern_arrays(state):
            if p.class_id != c:
                continue
            pat = _unit(p.binarized_adjacency())
            vals.append(np.mean([normalized_similarity(pat, m, cfg).item() for m in motifs[c]]))
        per_class.append(np.mean(vals))
    if not per_class:
        raise DataError("no graphs to compare patterns against")
    return float(np.mean(per_class))


# --- silhouette -----------------------------------------------------------------


def silhouette_from_distances(dist: np.ndarray, labels: Sequence[int]) -> float:
    """Mean silhouette over samples; members of singleton clusters score 0."""
    labels = np.asarray(labels)
    n_clusters = len(np.unique(labels))
    if n_clusters < 2:
        raise SingleClusterError("all samples fall into one cluster; silhouette is undefined")
    if n_clusters == len(labels):
        return 0.0
    return float(np.mean(silhouette_samples(dist, labels, metric="precomputed")))


def coarsened_distances(state: ModelState, graphs: Sequence[AttributedGraph]) -> tuple[np.ndarray, np.ndarray]:
    """Kernel distances among coarsened graphs and from each to every pattern."""
    view = View(state)
    ctx = pattern_context(view)
    cfg = state.config.kernel
    walks = [walk_graph(view.compress(g), cfg) for g in graphs]
    stack = GraphStack.of(walks)
    raw = prepared(cfg)
    k_gg = stacked_kernel(stack, stack, raw).value
    k_gp = stacked_kernel(stack, ctx.stack, raw).value
    d_g = np.diag(k_gg)
    d_p = ctx.self_kernel_row.value[0]
    dist_gg = np.sqrt(np.maximum(0.0, 0.5 * (d_g[:, None] + d_g[None, :]) - k_gg))
    np.fill_diagonal(dist_gg, 0.0)
    dist_gp = np.sqrt(np.maximum(0.0, 0.5 * (d_g[:, None] + d_p[None, :]) - k_gp))
    return dist_gg, dist_gp


def eval_silhouette(state: ModelState, graphs: Sequence[AttributedGraph]) -> float:
    """Cluster coarsened graphs around their nearest pattern and score the clustering."""
    if state.num_patterns < 2:
        raise ValueError("silhouette needs at least two patterns")
    dist_gg, dist_gp = coarsened_distances(state, graphs)
    return silhouette_from_distances(dist_gg, np.argmin(dist_gp, axis=1))


def evaluate(
    state: ModelState,
    test_graphs: Sequence[AttributedGraph],
    train_graphs: Sequence[AttributedGraph] | None = None,
    probe_seed: int = 0,
    probe_epochs: int = 100,
) -> MetricReport:
    """Every metric that applies: the probe needs ``train_graphs``, consistency needs
    super-graph metadata, silhouette needs two occupied clusters; others stay ``None``.
    """
    acc, f1 = eval_accuracy_f1(state, test_graphs)
    report = MetricReport(acc, f1)
    if train_graphs:
        probe = train_probe(coarsened_probe_inputs(state, train_graphs), state.num_classes, probe_seed, probe_epochs)
        report.explanation_accuracy = eval_explanation_accuracy(state, probe)
    if all("supergraph" in g.meta for g in test_graphs):
        report.consistency = eval_consistency(state, test_graphs)
    try:
        report.silhouette = eval_silhouette(state, test_graphs)
    except SingleClusterError:
        report.silhouette = None
    return report
