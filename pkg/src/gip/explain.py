"""Instance explanations (closest patterns of the predicted class) and pattern export."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from .graphs import AttributedGraph
from .model import ModelState, PatternContext, View, forward, pattern_arrays, pattern_context
from .patterns import EXPORT_EDGE_THRESHOLD


@dataclass
class RankedPattern:
    pattern_id: int
    raw_sim: float
    normalized_sim: float


@dataclass
class Explanation:
    graph_id: int | None
    predicted_class: int
    ranking: list[RankedPattern] = field(default_factory=list)

    @property
    def top(self) -> RankedPattern:
        return self.ranking[0]

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "predicted_class": self.predicted_class,
            "ranking": [vars(r) for r in self.ranking],
        }


def explain_instance(
    state: ModelState,
    graph: AttributedGraph,
    graph_id: int | None = None,
    ctx: PatternContext | None = None,
) -> Explanation:
    """Rank the predicted class's patterns by raw kernel similarity to the coarsened graph.

    Ties keep the lower pattern id first.
    """
    ctx = pattern_context(View(state)) if ctx is None else ctx
    out = forward(graph, state, ctx=ctx)
    label = out.prediction
    sims = out.sims.value[0]
    k_cg = out.self_kernel.item()
    k_pp = ctx.self_kernel_row.value[0]
    ids = ctx.bank.of_class(label)
    order = sorted(ids, key=lambda t: (-sims[t], t))
    ranking = [
        RankedPattern(t, float(sims[t]), float(sims[t] / math.sqrt(k_cg * k_pp[t])) if k_cg * k_pp[t] > 0 else 0.0)
        for t in order
    ]
    return Explanation(graph_id, label, ranking)


def export_patterns(state: ModelState, out_dir) -> list[Path]:
    """Write ``pattern_<t>.json`` and ``pattern_<t>.graphml`` for every pattern."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t, p in enumerate(pattern_arrays(state)):
        adj = np.asarray(p.adj)
        edges = [[i, j, float(adj[i, j])] for i, j in zip(*np.nonzero(np.triu(adj > EXPORT_EDGE_THRESHOLD, 1)))]
        record = {
            "pattern_id": t,
            "class_id": p.class_id,
            "num_nodes": p.num_nodes,
            "threshold": EXPORT_EDGE_THRESHOLD,
            "adjacency": adj.tolist(),
            "features": np.asarray(p.x).tolist(),
            "edges": [[int(i), int(j), w] for i, j, w in edges],
        }
        rec_path = out_dir / f"pattern_{t}.json"
        rec_path.write_text(json.dumps(record, indent=1) + "\n")
        g = nx.Graph(pattern_id=t, class_id=p.class_id)
        g.add_nodes_from(range(p.num_nodes))
        for i, j, w in record["edges"]:
            g.add_edge(i, j, weight=w)
        gml_path = out_dir / f"pattern_{t}.graphml"
        nx.write_graphml(g, gml_path)
        written += [rec_path, gml_path]
    return written


def read_pattern_record(path) -> dict:
    rec = json.loads(Path(path).read_text())
    rec["adjacency"] = np.asarray(rec["adjacency"], dtype=np.float64)
    rec["features"] = np.asarray(rec["features"], dtype=np.float64)
    return rec
