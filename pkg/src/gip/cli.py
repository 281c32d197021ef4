"""``gip`` command line: generate data, train, evaluate, explain, and probe the kernel."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .config import PRESET_NAMES, TrainConfig, preset
from .errors import ConfigError, DataError, DivergenceError
from .graphs import AttributedGraph, GraphDataset, SplitSpec, split_dataset
from .kernel import KernelConfig, normalized_similarity, rw_kernel
from .synthetic import generate_graphcycle, generate_graphfive
from .tu import parse_tu_dataset, write_tu_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
CONFIG_RESOLVED = "config_resolved.json"
THREADS_ENV = "GIP_NUM_THREADS"

log = logging.getLogger("gip")

GENERATORS = {"graphcycle": generate_graphcycle, "graphfive": generate_graphfive}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(",")
    try:
        return int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI integers, got {text!r}") from None


def _frange(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(",")
    try:
        return float(lo), float(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gip", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic dataset in TU layout")
    g.add_argument("--kind", choices=sorted(GENERATORS), required=True)
    g.add_argument("--n", type=int, required=True, help="number of graphs")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--communities", type=_range, help="LO,HI communities per graph")
    g.add_argument("--sizes", type=_range, help="LO,HI nodes per community")
    g.add_argument("--edge-prob", type=_frange, help="LO,HI inter-community wiring probability")
    g.add_argument("--ports", type=int, help="candidate port nodes per side of a super-edge")

    def common(sp, needs_model: bool):
        sp.add_argument("--data", required=True, help="TU dataset directory")
        sp.add_argument("--out", required=True)
        if needs_model:
            sp.add_argument("--model", required=True, help="run directory or checkpoint file")
            sp.add_argument("--split", help="split file (default: the one saved with the model)")
            sp.add_argument("--subset", choices=("train", "val", "test"), default="test")

    t = sub.add_parser("train", help="train a model")
    common(t, False)
    src = t.add_mutually_exclusive_group()
    src.add_argument("--config", help="flat JSON config file")
    src.add_argument("--preset", choices=PRESET_NAMES)
    t.add_argument("--seed", type=int)
    t.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    e = sub.add_parser("eval", help="compute the metric report for a trained model")
    common(e, True)
    e.add_argument("--probe-epochs", type=int, default=100)

    x = sub.add_parser("explain", help="write instance explanations and pattern files")
    common(x, True)

    k = sub.add_parser("kernel", help="random-walk kernel between two JSON graph files")
    k.add_argument("graph1")
    k.add_argument("graph2")
    k.add_argument("--R", type=int, default=3)
    k.add_argument("--normalized", action="store_true")
    k.add_argument("--walk-norm", choices=("none", "sym"), default="none")
    k.add_argument("--out")
    return p


# --- helpers ----------------------------------------------------------------


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        return threadpool_limits(limits=int(value))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {value!r}") from None


def _write_resolved(out: Path, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_RESOLVED).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_dataset(path) -> GraphDataset:
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"dataset directory {path} does not exist")
    return parse_tu_dataset(path)


def _model_paths(model: str) -> tuple[Path, Path]:
    p = Path(model)
    return (p / "model.npz", p) if p.is_dir() else (p, p.parent)


def _subset(dataset: GraphDataset, run_dir: Path, split_path: str | None, name: str):
    split_file = Path(split_path) if split_path else run_dir / "split.json"
    if not split_file.exists():
        raise DataError(f"no split file at {split_file}")
    try:
        split = SplitSpec.from_dict(json.loads(split_file.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed split file {split_file}: {e!r}") from None
    if max(split.train + split.val + split.test, default=-1) >= len(dataset):
        raise DataError(f"split {split_file} does not match the dataset ({len(dataset)} graphs)")
    return split, dataset.subset(getattr(split, name))


def read_graph_json(path) -> AttributedGraph:
    """``{"x": [[...]], "adj": [[...]]}``; ``edges`` ([[i, j] or [i, j, w]]) may replace ``adj``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read graph file {path}: {e}") from None
    try:
        x = np.asarray(data["x"], dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if "adj" in data:
            adj = np.asarray(data["adj"], dtype=np.float64).reshape(x.shape[0], x.shape[0])
        else:
            adj = np.zeros((x.shape[0], x.shape[0]))
            for e in data.get("edges", []):
                w = float(e[2]) if len(e) > 2 else 1.0
                adj[int(e[0]), int(e[1])] = adj[int(e[1]), int(e[0])] = w
        return AttributedGraph(x, adj)
    except (KeyError, ValueError, TypeError, IndexError) as e:
        raise DataError(f"malformed graph file {path}: {e}") from None


# --- commands ---------------------------------------------------------------


def cmd_gen_data(args) -> int:
    overrides = {}
    for key, attr in (("n_communities", "communities"), ("community_size", "sizes"), ("edge_prob", "edge_prob"), ("n_ports", "ports")):
        if getattr(args, attr) is not None:
            overrides[key] = getattr(args, attr)
    ds = GENERATORS[args.kind](args.n, args.seed, **overrides)
    out = Path(args.out)
    write_tu_dataset(ds, out, ds.name)
    _write_resolved(out, {"command": "gen-data", "kind": args.kind, "n": args.n, "seed": args.seed, **overrides})
    print(f"wrote {len(ds)} graphs ({ds.num_classes} classes) to {out}")
    return EXIT_OK


def resolve_config(args) -> TrainConfig:
    if args.config:
        cfg = TrainConfig.load(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = TrainConfig()
    if args.seed is not None:
        cfg = cfg.with_values({"seed": args.seed})
    return cfg.with_overrides(args.overrides)


def cmd_train(args) -> int:
    from .model import save_checkpoint
    from .training import accuracy, train, write_history

    cfg = resolve_config(args)
    ds = _load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / CONFIG_RESOLVED)
    split = split_dataset(ds, cfg.split_ratios, cfg.seed)
    (out / "split.json").write_text(json.dumps(split.to_dict()) + "\n")
    result = train(ds, split, cfg)
    save_checkpoint(result.state, out / "model.npz")
    write_history(result.history, out / "history.jsonl")
    test_acc = accuracy(result.state, ds.subset(split.test)) if split.test else float("nan")
    print(f"best epoch {result.best_epoch}, val acc {result.best_val_acc:.4f}, test acc {test_acc:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import evaluate
    from .model import load_checkpoint

    ckpt, run_dir = _model_paths(args.model)
    state = load_checkpoint(ckpt)
    ds = _load_dataset(args.data)
    split, graphs = _subset(ds, run_dir, args.split, args.subset)
    out = Path(args.out)
    _write_resolved(out, {"command": "eval", "model": str(ckpt), "subset": args.subset, "probe_epochs": args.probe_epochs, **state.config.to_dict()})
    report = evaluate(state, graphs, ds.subset(split.train), state.config.seed, args.probe_epochs)
    report.save(out / "metrics.json")
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_explain(args) -> int:
    from .explain import explain_instance, export_patterns
    from .model import View, load_checkpoint, pattern_context

    ckpt, run_dir = _model_paths(args.model)
    state = load_checkpoint(ckpt)
    ds = _load_dataset(args.data)
    split, _ = _subset(ds, run_dir, args.split, args.subset)
    out = Path(args.out)
    _write_resolved(out, {"command": "explain", "model": str(ckpt), "subset": args.subset, **state.config.to_dict()})
    ctx = pattern_context(View(state))
    with open(out / "explanations.jsonl", "w") as fh:
        for gid in getattr(split, args.subset):
            fh.write(json.dumps(explain_instance(state, ds[gid], gid, ctx).to_dict()) + "\n")
    export_patterns(state, out / "patterns")
    print(f"wrote explanations and {state.num_patterns} patterns to {out}")
    return EXIT_OK


def cmd_kernel(args) -> int:
    g1, g2 = read_graph_json(args.graph1), read_graph_json(args.graph2)
    cfg = KernelConfig(args.R, adjacency_norm=args.walk_norm)
    value = normalized_similarity(g1, g2, cfg) if args.normalized else rw_kernel(g1, g2, cfg)
    if args.out:
        _write_resolved(Path(args.out), {"command": "kernel", "R": args.R, "normalized": args.normalized, "walk_norm": args.walk_norm})
    print(f"{value.item():.12g}")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "explain": cmd_explain, "kernel": cmd_kernel}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"gip: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"gip: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as e:
        print(f"gip: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
