"""Model parameters and the end-to-end forward pass: coarsen, match patterns, classify."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .clustering import CoarsenedGraph, compress, num_clusters
from .config import TrainConfig
from .encoder import GcnParams, MlpParams
from .graphs import AttributedGraph
from .kernel import GraphStack, distance_from_kernels, prepared, rw_kernel, stacked_kernel, walk_graph
from .patterns import (
    InteractivePattern,
    PatternBank,
    diversity_loss,
    generate_pattern_adjacency,
    multi_similarity_loss,
)

CHECKPOINT_VERSION = 1


@dataclass
class ModelState:
    """All trainable arrays by name, plus the fixed layout needed to rebuild the model.

    ``head_widths[b]`` is the output width of block ``b``'s assignment head; a graph
    uses its first ``K`` outputs, ``K = max(2, ceil(ratio * N))`` capped at that width.
    """

    params: dict[str, np.ndarray]
    config: TrainConfig
    feature_dim: int
    num_classes: int
    head_widths: list[int]
    pattern_nodes: int
    meta: dict = field(default_factory=dict)

    @property
    def num_patterns(self) -> int:
        return self.config.patterns_per_class * self.num_classes

    @property
    def pattern_classes(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_classes), self.config.patterns_per_class)

    def copy(self) -> ModelState:
        return ModelState(
            {k: v.copy() for k, v in self.params.items()},
            self.config,
            self.feature_dim,
            self.num_classes,
            list(self.head_widths),
            self.pattern_nodes,
            dict(self.meta),
        )

    def bind(self, tape: ad.Tape) -> dict[str, ad.Tensor]:
        """Register every parameter on ``tape`` (sorted by name for a fixed order)."""
        return {k: tape.param(self.params[k], k) for k in sorted(self.params)}


class View:
    """Typed access to a name -> array/Tensor mapping laid out by :class:`ModelState`."""

    def __init__(self, state: ModelState, values: Mapping[str, object] | None = None):
        self.state = state
        self.values = state.params if values is None else values

    def encoder(self, block: int) -> GcnParams:
        n = self.state.config.gcn_layers
        return GcnParams([self.values[f"enc{block}.W{i}"] for i in range(n)])

    def assign_head(self, block: int) -> MlpParams:
        return MlpParams(
            [self.values[f"assign{block}.W{i}"] for i in range(2)],
            [self.values[f"assign{block}.b{i}"] for i in range(2)],
        )

    def topology_head(self) -> MlpParams:
        return MlpParams([self.values[f"topo.W{i}"] for i in range(2)], [self.values[f"topo.b{i}"] for i in range(2)])

    def pattern_features(self, t: int):
        return self.values[f"pattern{t}.X"]

    def classifier(self):
        return self.values["fc.W"], self.values["fc.b"]

    def bank(self) -> PatternBank:
        topo = self.topology_head()
        classes = self.state.pattern_classes
        pats = []
        for t in range(self.state.num_patterns):
            x = self.pattern_features(t)
            pats.append(InteractivePattern(int(classes[t]), ad.as_tensor(x), generate_pattern_adjacency(x, topo)))
        return PatternBank(pats, self.state.num_classes)

    def compress(self, graph: AttributedGraph) -> CoarsenedGraph:
        blocks = range(self.state.config.num_blocks)
        return compress(
            graph,
            [self.encoder(b) for b in blocks],
            [self.assign_head(b) for b in blocks],
            self.state.config.compression,
        )


def _head_widths(graphs: Sequence[AttributedGraph], config: TrainConfig) -> list[int]:
    widths = []
    sizes = [g.num_nodes for g in graphs]
    for _ in range(config.num_blocks):
        sizes = [num_clusters(n, config.ratio) for n in sizes]
        widths.append(max(sizes))
    return widths


def default_pattern_nodes(graphs: Sequence[AttributedGraph], config: TrainConfig) -> int:
    n = int(round(float(np.mean([g.num_nodes for g in graphs]))))
    return config.compression.sizes(max(n, 2))[-1]


def init_model(
    train_graphs: Sequence[AttributedGraph],
    num_classes: int,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> ModelState:
    """Seeded initialization.

    Pattern features are standard normal (``pattern_init="random"``), or class
    centroids of the coarsened training graphs plus ``pattern_init_noise`` noise.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    d = train_graphs[0].feature_dim
    h, e = config.hidden_dim, config.embed_dim
    params: dict[str, np.ndarray] = {}
    for b, width in enumerate(_head_widths(train_graphs, config)):
        dims = [d if b == 0 else e] + [h] * (config.gcn_layers - 1) + [e]
        for i, w in enumerate(GcnParams.init(rng, dims).weights):
            params[f"enc{b}.W{i}"] = w
        mlp = MlpParams.init(rng, [e, config.mlp1_hidden, width])
        for i, (w, bias) in enumerate(zip(mlp.weights, mlp.biases)):
            params[f"assign{b}.W{i}"] = w
            params[f"assign{b}.b{i}"] = bias
    mlp2 = MlpParams.init(rng, [2 * e, config.mlp2_hidden, 1])
    for i, (w, bias) in enumerate(zip(mlp2.weights, mlp2.biases)):
        params[f"topo.W{i}"] = w
        params[f"topo.b{i}"] = bias
    t = config.patterns_per_class * num_classes
    # zero classifier: uniform predictions at start, whatever the kernel scale
    params["fc.W"] = np.zeros((t, num_classes))
    params["fc.b"] = np.zeros((1, num_classes))

    n_p = config.pattern_nodes or default_pattern_nodes(train_graphs, config)
    state = ModelState(params, config, d, num_classes, _head_widths(train_graphs, config), n_p)

    if config.pattern_init == "centroid":
        view = View(state)
        sums = np.zeros((num_classes, e))
        counts = np.zeros(num_classes)
        for g in train_graphs:
            x = view.compress(g).x.value
            sums[g.label] += x.sum(axis=0)
            counts[g.label] += x.shape[0]
        centroids = sums / np.maximum(counts, 1)[:, None]
    else:
        centroids = np.zeros((num_classes, e))
    noise = config.pattern_init_noise if config.pattern_init == "centroid" else 1.0
    for i, c in enumerate(state.pattern_classes):
        params[f"pattern{i}.X"] = centroids[c][None, :] + noise * rng.standard_normal((n_p, e))
    return state


@dataclass
class ForwardOutput:
    probs: ad.Tensor
    logits: ad.Tensor
    sims: ad.Tensor
    distances: ad.Tensor
    coarsened: CoarsenedGraph
    cluster_loss: ad.Tensor
    balance_loss: ad.Tensor
    self_kernel: ad.Tensor

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.probs.value[0]))


@dataclass
class PatternContext:
    """Per-step pattern quantities shared by every graph in a batch.

    ``stack`` is the disjoint union of the patterns as the walks see them and
    ``gram`` the T x T kernel matrix among patterns.
    """

    bank: PatternBank
    stack: GraphStack
    gram: ad.Tensor
    self_kernel_row: ad.Tensor


def pattern_context(view: View) -> PatternContext:
    bank = view.bank()
    cfg = view.state.config.kernel
    stack = GraphStack.of([walk_graph(p, cfg) for p in bank.patterns])
    gram = stacked_kernel(stack, stack, prepared(cfg))
    diag = ad.sum_(gram * np.eye(len(bank)), axis=0)
    return PatternContext(bank, stack, gram, diag)


def forward(graph: AttributedGraph, state: ModelState, view: View | None = None, ctx: PatternContext | None = None) -> ForwardOutput:
    view = View(state) if view is None else view
    ctx = pattern_context(view) if ctx is None else ctx
    kcfg = state.config.kernel
    cg = view.compress(graph)
    walk, raw = walk_graph(cg, kcfg), prepared(kcfg)
    sims = stacked_kernel(GraphStack(walk.x, walk.adj, (cg.num_nodes,)), ctx.stack, raw)
    k_cg = rw_kernel(walk, walk, raw)
    distances = distance_from_kernels(sims, k_cg, ctx.self_kernel_row)
    w, b = view.classifier()
    logits = ad.matmul(sims, w) + b
    probs = ad.row_softmax(logits)
    return ForwardOutput(probs, logits, sims, distances, cg, cg.cluster_loss, cg.balance_loss, k_cg)


def cross_entropy(logits: ad.Tensor, label: int) -> ad.Tensor:
    """``logsumexp(logits) - logits[label]`` for a 1 x C row."""
    m = float(logits.value.max())
    lse = ad.log(ad.sum_(ad.exp(logits - m))) + m
    return lse - ad.slice_(logits, cols=slice(label, label + 1))


LOSS_KEYS = ("ce", "clu", "bal", "mul", "div", "total")


def loss_terms(
    graphs: Sequence[AttributedGraph],
    state: ModelState,
    view: View | None = None,
) -> dict[str, ad.Tensor]:
    """Every objective term as a 1x1 tensor, keyed by :data:`LOSS_KEYS`.

    ``total = CE + b1 (a1 clu + a2 bal) + b2 (a3 mul + a4 div)``. CE, cut and
    balance terms are averaged over the batch; the diversity term is computed
    once per batch from the shared pattern bank.
    """
    if not graphs:
        raise ValueError("empty batch")
    cfg = state.config
    view = View(state) if view is None else view
    ctx = pattern_context(view)
    inv_m = 1.0 / len(graphs)
    ce = clu = bal = None
    rows, labels = [], []
    for g in graphs:
        out = forward(g, state, view, ctx)
        c = cross_entropy(out.logits, g.label)
        ce = c if ce is None else ce + c
        clu = out.cluster_loss if clu is None else clu + out.cluster_loss
        bal = out.balance_loss if bal is None else bal + out.balance_loss
        rows.append(out.distances)
        labels.append(g.label)
    ce, clu, bal = ce * inv_m, clu * inv_m, bal * inv_m
    mul = multi_similarity_loss(rows, labels, state.pattern_classes, cfg.ms_loss)
    div = diversity_loss(ctx.bank, cfg.kernel, cfg.delta2, normalized=cfg.diversity_normalized, gram=ctx.gram)
    total = ce + cfg.beta1 * (cfg.alpha1 * clu + cfg.alpha2 * bal) + cfg.beta2 * (cfg.alpha3 * mul + cfg.alpha4 * div)
    return {"ce": ce, "clu": clu, "bal": bal, "mul": mul, "div": div, "total": total}


def total_loss(
    graphs: Sequence[AttributedGraph],
    state: ModelState,
    view: View | None = None,
) -> tuple[ad.Tensor, dict[str, float]]:
    """The batch objective and the float value of each term."""
    terms = loss_terms(graphs, state, view)
    return terms["total"], {k: v.item() for k, v in terms.items()}


def predict(state: ModelState, graph: AttributedGraph, ctx: PatternContext | None = None) -> tuple[int, np.ndarray, np.ndarray]:
    """``(label, probs, sims)``; ties in probability go to the lowest class id."""
    out = forward(graph, state, ctx=ctx)
    probs = out.probs.value[0]
    return int(np.argmax(probs)), probs.copy(), out.sims.value[0].copy()


def predict_many(state: ModelState, graphs: Sequence[AttributedGraph]) -> list[tuple[int, np.ndarray, np.ndarray]]:
    ctx = pattern_context(View(state))
    return [predict(state, g, ctx) for g in graphs]


# --- checkpoints ----------------------------------------------------------


def save_checkpoint(state: ModelState, path) -> Path:
    """Write an ``.npz`` container of named arrays with a JSON header entry."""
    path = Path(path)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": state.config.to_dict(),
        "feature_dim": state.feature_dim,
        "num_classes": state.num_classes,
        "head_widths": state.head_widths,
        "pattern_nodes": state.pattern_nodes,
        "meta": state.meta,
    }
    buf = io.BytesIO()
    np.savez(buf, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **state.params)
    path.write_bytes(buf.getvalue())
    return path


def load_checkpoint(path) -> ModelState:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        params = {k: data[k].copy() for k in data.files if k != "__header__"}
    return ModelState(
        params,
        TrainConfig.from_dict(header["config"]),
        header["feature_dim"],
        header["num_classes"],
        list(header["head_widths"]),
        header["pattern_nodes"],
        header.get("meta", {}),
    )


def pattern_arrays(state: ModelState) -> list[InteractivePattern]:
    """Patterns with plain-array features and generated adjacency."""
    bank = View(state).bank()
    return [InteractivePattern(p.class_id, np.asarray(p.x.value), np.asarray(p.adj.value)) for p in bank.patterns]
