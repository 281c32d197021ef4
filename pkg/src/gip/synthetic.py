"""Synthetic community-structured datasets (GraphCycle, GraphFive).

Each graph is a set of Barabasi-Albert communities whose "super-nodes" are laid
out in a class-specific shape. Each super-edge becomes random node-to-node edges
between the two communities. The super-graph is stored in
``graph.meta["supergraph"]`` as ground truth for explanation metrics.
"""

from __future__ import annotations

from typing import Callable

import networkx as nx
import numpy as np

from .graphs import AttributedGraph, GraphDataset, degree_one_hot
from .tu import DEFAULT_MAX_DEGREE

Layout = Callable[[int, np.random.Generator], list[tuple[int, int]]]


def cycle_layout(k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    order = rng.permutation(k)
    return [(int(order[i]), int(order[(i + 1) % k])) for i in range(k)]


def tree_layout(k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform random labelled tree via a random Pruefer sequence."""
    if k == 2:
        return [(0, 1)]
    seq = rng.integers(0, k, size=k - 2).tolist()
    tree = nx.from_prufer_sequence(seq)
    return [(int(u), int(v)) for u, v in tree.edges()]


def wheel_layout(k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    order = rng.permutation(k)
    hub, rim = int(order[0]), [int(v) for v in order[1:]]
    edges = [(hub, v) for v in rim]
    if len(rim) >= 3:
        edges += [(rim[i], rim[(i + 1) % len(rim)]) for i in range(len(rim))]
    elif len(rim) == 2:
        edges.append((rim[0], rim[1]))
    return edges


def grid_layout(k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """First ``k`` cells of a near-square lattice filled row by row."""
    order = rng.permutation(k)
    width = int(np.ceil(np.sqrt(k)))
    edges = []
    for i in range(k):
        r, c = divmod(i, width)
        if c + 1 < width and i + 1 < k:
            edges.append((int(order[i]), int(order[i + 1])))
        if i + width < k:
            edges.append((int(order[i]), int(order[i + width])))
    return edges


def ladder_layout(k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Two rails of ``k // 2`` joined by rungs; an odd leftover extends the top rail."""
    order = [int(v) for v in rng.permutation(k)]
    h = k // 2
    top, bottom = order[:h], order[h : 2 * h]
    edges = [(top[i], top[i + 1]) for i in range(h - 1)]
    edges += [(bottom[i], bottom[i + 1]) for i in range(h - 1)]
    edges += [(top[i], bottom[i]) for i in range(h)]
    if k % 2:
        edges.append((top[-1], order[-1]))
    return edges


def star_layout(k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    hub = int(rng.integers(k))
    return [(hub, v) for v in range(k) if v != hub]


GRAPHCYCLE_LAYOUTS: dict[str, Layout] = {"non-cycle": tree_layout, "cycle": cycle_layout}
GRAPHFIVE_LAYOUTS: dict[str, Layout] = {
    "wheel": wheel_layout,
    "grid": grid_layout,
    "tree": tree_layout,
    "ladder": ladder_layout,
    "star": star_layout,
}


def _community_graph(
    rng: np.random.Generator,
    layout_name: str,
    layout: Layout,
    n_communities: tuple[int, int],
    community_size: tuple[int, int],
    ba_m: int,
    edge_prob: tuple[float, float],
    n_ports: int | None,
):
    k = int(rng.integers(n_communities[0], n_communities[1] + 1))
    sizes = rng.integers(community_size[0], community_size[1] + 1, size=k)
    n = int(sizes.sum())
    adj = np.zeros((n, n))
    members = []
    start = 0
    for size in sizes:
        size = int(size)
        ba = nx.barabasi_albert_graph(size, min(ba_m, size - 1), seed=int(rng.integers(2**31 - 1)))
        for u, v in ba.edges():
            adj[start + u, start + v] = adj[start + v, start + u] = 1.0
        members.append(list(range(start, start + size)))
        start += size

    super_edges = layout(k, rng)
    p = float(rng.uniform(*edge_prob))
    for a, b in super_edges:
        ports_a, ports_b = np.asarray(members[a]), np.asarray(members[b])
        if n_ports is not None:
            ports_a = rng.choice(ports_a, size=min(n_ports, len(ports_a)), replace=False)
            ports_b = rng.choice(ports_b, size=min(n_ports, len(ports_b)), replace=False)
        hits = rng.random((len(ports_a), len(ports_b))) < p
        if not hits.any():
            # keep every super-edge present so the stored motif is recoverable
            hits[rng.integers(len(ports_a)), rng.integers(len(ports_b))] = True
        for i, j in zip(*np.nonzero(hits)):
            u, v = ports_a[i], ports_b[j]
            adj[u, v] = adj[v, u] = 1.0

    meta = {
        "layout": layout_name,
        "communities": members,
        "super_edges": [[int(a), int(b)] for a, b in super_edges],
    }
    return adj, meta


def _generate(
    layouts: dict[str, Layout],
    n_graphs: int,
    seed: int,
    name: str,
    n_communities=(8, 15),
    community_size=(10, 200),
    ba_m: int = 2,
    edge_prob=(0.05, 0.15),
    n_ports: int | None = None,
    max_degree: int = DEFAULT_MAX_DEGREE,
) -> GraphDataset:
    if n_graphs < 2:
        raise ValueError(f"n_graphs must be at least 2, got {n_graphs}")
    rng = np.random.default_rng(seed)
    names = list(layouts)
    c = len(names)
    labels = rng.permutation(np.arange(n_graphs) % c)
    raw = []
    for y in labels:
        adj, meta = _community_graph(
            rng, names[y], layouts[names[y]], n_communities, community_size, ba_m, edge_prob, n_ports
        )
        raw.append((adj, meta, int(y)))
    max_seen = max(int(np.count_nonzero(a, axis=1).max()) for a, _, _ in raw)
    cap = min(max_degree, max_seen)
    graphs = [AttributedGraph(degree_one_hot(a, cap), a, y, {"supergraph": m}) for a, m, y in raw]
    return GraphDataset(graphs, c, name)


def generate_graphcycle(n_graphs: int, seed: int, **overrides) -> GraphDataset:
    """Two classes: 0 = communities joined along a random tree, 1 = along a cycle.

    ``overrides`` accepts ``n_communities``, ``community_size`` (inclusive ranges),
    ``ba_m``, ``edge_prob`` (range), ``n_ports`` and ``max_degree``. Every node pair
    across a super-edge is wired with the graph's probability; ``n_ports`` instead
    restricts wiring to that many randomly chosen nodes per side.
    """
    return _generate(GRAPHCYCLE_LAYOUTS, n_graphs, seed, "GraphCycle", **overrides)


def generate_graphfive(n_graphs: int, seed: int, **overrides) -> GraphDataset:
    """Five classes: wheel, grid, tree, ladder, star super-graphs (in that label order)."""
    return _generate(GRAPHFIVE_LAYOUTS, n_graphs, seed, "GraphFive", **overrides)


def supergraph_adjacency(meta: dict) -> np.ndarray:
    """Unweighted k x k adjacency of a stored super-graph record."""
    k = len(meta["communities"])
    adj = np.zeros((k, k))
    for a, b in meta["super_edges"]:
        adj[a, b] = adj[b, a] = 1.0
    return adj
