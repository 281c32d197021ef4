"""Reading and writing the TU plain-text multi-graph layout.

Files are ``<name>_A.txt`` (1-based edge pairs over the global node numbering),
``<name>_graph_indicator.txt`` (graph id per node), ``<name>_graph_labels.txt``
and optionally ``<name>_node_labels.txt`` / ``<name>_node_attributes.txt``.
Generated datasets additionally carry ``<name>_supergraph.json``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .graphs import AttributedGraph, GraphDataset, degree_one_hot

DEFAULT_MAX_DEGREE = 64


def _read_ints(path: Path, what: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([int(tok) for tok in line.replace(",", " ").split()])
            except ValueError:
                raise DataError(f"{path.name}:{lineno}: non-integer {what} {line!r}") from None
    return np.array(rows, dtype=np.int64)


def _read_floats(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.replace(",", " ").split()])
            except ValueError:
                raise DataError(f"{path.name}:{lineno}: bad attribute row {line!r}") from None
    return np.array(rows, dtype=np.float64)


def detect_name(directory) -> str:
    """Infer the dataset name from the single ``*_A.txt`` file in ``directory``."""
    hits = sorted(Path(directory).glob("*_A.txt"))
    if len(hits) != 1:
        raise DataError(f"expected exactly one *_A.txt in {directory}, found {len(hits)}")
    return hits[0].name[: -len("_A.txt")]


def parse_tu_dataset(directory, name: str | None = None, max_degree: int = DEFAULT_MAX_DEGREE) -> GraphDataset:
    directory = Path(directory)
    name = name or detect_name(directory)

    def path(suffix):
        return directory / f"{name}_{suffix}.txt"

    for suffix in ("A", "graph_indicator", "graph_labels"):
        if not path(suffix).exists():
            raise DataError(f"missing mandatory file {path(suffix)}")

    indicator = _read_ints(path("graph_indicator"), "graph id").reshape(-1)
    raw_labels = _read_ints(path("graph_labels"), "graph label").reshape(-1)
    edges = _read_ints(path("A"), "node index")
    n_nodes = len(indicator)
    n_graphs = len(raw_labels)
    if edges.size and edges.shape[1] != 2:
        raise DataError(f"{name}_A.txt must hold pairs, got {edges.shape[1]} columns")
    if indicator.min(initial=1) < 1 or indicator.max(initial=1) > n_graphs:
        raise DataError(f"graph ids in indicator must lie in 1..{n_graphs}")
    if edges.size and (edges.min() < 1 or edges.max() > n_nodes):
        raise DataError(f"edge endpoint outside 1..{n_nodes}: node index outside any graph")
    if np.any(np.diff(indicator) < 0):
        raise DataError("graph indicator must be non-decreasing")

    feats = []
    if path("node_labels").exists():
        nl = _read_ints(path("node_labels"), "node label")[:, 0]
        if len(nl) != n_nodes:
            raise DataError(f"{name}_node_labels.txt has {len(nl)} rows, expected {n_nodes}")
        values, inv = np.unique(nl, return_inverse=True)
        one_hot = np.zeros((n_nodes, len(values)))
        one_hot[np.arange(n_nodes), inv] = 1.0
        feats.append(one_hot)
    if path("node_attributes").exists():
        na = _read_floats(path("node_attributes"))
        if len(na) != n_nodes:
            raise DataError(f"{name}_node_attributes.txt has {len(na)} rows, expected {n_nodes}")
        feats.append(na)
    x_all = np.hstack(feats) if feats else None

    label_values = np.unique(raw_labels)
    label_map = {int(v): i for i, v in enumerate(label_values)}

    starts = np.searchsorted(indicator, np.arange(1, n_graphs + 2))
    adjs = [np.zeros((starts[g + 1] - starts[g],) * 2) for g in range(n_graphs)]
    for u, v in edges - 1:
        gu, gv = indicator[u] - 1, indicator[v] - 1
        if gu != gv:
            raise DataError(f"edge ({u + 1}, {v + 1}) joins graphs {gu + 1} and {gv + 1}")
        if u == v:
            continue
        a = adjs[gu]
        a[u - starts[gu], v - starts[gu]] = 1.0
        a[v - starts[gu], u - starts[gu]] = 1.0

    if x_all is None:
        max_seen = max((int(np.count_nonzero(a, axis=1).max(initial=0)) for a in adjs), default=0)
        cap = min(max_degree, max_seen)
    graphs = []
    for g in range(n_graphs):
        a = adjs[g]
        x = x_all[starts[g] : starts[g + 1]] if x_all is not None else degree_one_hot(a, cap)
        graphs.append(AttributedGraph(x, a, label_map[int(raw_labels[g])]))

    sg_path = directory / f"{name}_supergraph.json"
    if sg_path.exists():
        records = json.loads(sg_path.read_text())
        if len(records) != n_graphs:
            raise DataError(f"{sg_path.name} has {len(records)} records for {n_graphs} graphs")
        for g, rec in zip(graphs, records):
            g.meta["supergraph"] = rec
    return GraphDataset(graphs, len(label_values), name)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_tu_dataset(dataset: GraphDataset, directory, name: str | None = None) -> Path:
    """Write ``dataset`` in TU layout; features go to ``node_attributes`` verbatim."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    name = name or dataset.name
    offset = 0
    with (
        open(directory / f"{name}_A.txt", "w") as fa,
        open(directory / f"{name}_graph_indicator.txt", "w") as fi,
        open(directory / f"{name}_node_attributes.txt", "w") as fx,
    ):
        for gid, g in enumerate(dataset.graphs, 1):
            rows, cols = np.nonzero(g.adj)
            for u, v in zip(rows, cols):
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n")
            for i in range(g.num_nodes):
                fi.write(f"{gid}\n")
                fx.write(", ".join(_fmt(v) for v in g.x[i]) + "\n")
            offset += g.num_nodes
    with open(directory / f"{name}_graph_labels.txt", "w") as fl:
        for g in dataset.graphs:
            fl.write(f"{g.label}\n")
    records = [g.meta.get("supergraph") for g in dataset.graphs]
    if any(r is not None for r in records):
        (directory / f"{name}_supergraph.json").write_text(json.dumps(records))
    return directory
