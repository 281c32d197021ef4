"""Mini-batch training with Adam, early stopping on validation accuracy."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .errors import DivergenceError, NonFiniteError
from .graphs import GraphDataset, SplitSpec, split_dataset
from .model import LOSS_KEYS, ModelState, View, init_model, predict_many, total_loss

log = logging.getLogger(__name__)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainResult:
    state: ModelState
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = float("nan")


def accuracy(state: ModelState, graphs: Sequence) -> float:
    if not graphs:
        return float("nan")
    preds = predict_many(state, graphs)
    return float(np.mean([p[0] == g.label for p, g in zip(preds, graphs)]))


def train_step(state: ModelState, batch: Sequence, opt: Adam) -> dict[str, float]:
    tape = ad.Tape()
    bound = state.bind(tape)
    loss, parts = total_loss(batch, state, View(state, bound))
    grads = tape.backward(loss)
    opt.step(state.params, {k: grads[t] for k, t in bound.items()})
    return parts


def train(
    dataset: GraphDataset,
    split: SplitSpec | None = None,
    config: TrainConfig = TrainConfig(),
    on_epoch=None,
) -> TrainResult:
    """Train from scratch; returns the best-validation-accuracy parameters and the history.

    Everything random (initialization, batch order) derives from ``config.seed``,
    so identical inputs give identical histories.
    """
    split = split_dataset(dataset, config.split_ratios, config.seed) if split is None else split
    train_graphs = dataset.subset(split.train)
    val_graphs = dataset.subset(split.val)
    rng = np.random.default_rng(config.seed)
    state = init_model(train_graphs, dataset.num_classes, config, rng)
    opt = Adam(state.params, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)

    result = TrainResult(state.copy())
    best_acc, stale = -1.0, 0
    n = len(train_graphs)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        sums = dict.fromkeys(LOSS_KEYS, 0.0)
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = [train_graphs[i] for i in order[start : start + config.batch_size]]
            try:
                parts = train_step(state, batch, opt)
            except NonFiniteError as e:
                raise DivergenceError(f"non-finite value at epoch {epoch}, batch {b}: {e}", epoch, b) from e
            if not math.isfinite(parts["total"]):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}", epoch, b)
            for k in LOSS_KEYS:
                sums[k] += parts[k] * len(batch)
        record = {"epoch": epoch, **{k: sums[k] / n for k in LOSS_KEYS}}
        try:
            record["val_acc"] = accuracy(state, val_graphs)
        except NonFiniteError as e:
            raise DivergenceError(f"non-finite value during validation at epoch {epoch}: {e}", epoch) from e
        record["seconds"] = time.perf_counter() - t0
        result.history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.info("epoch %d total %.4f ce %.4f val_acc %.3f", epoch, record["total"], record["ce"], record["val_acc"])
        # ties count as progress: val accuracy on small splits plateaus at the majority rate
        if record["val_acc"] >= best_acc:
            best_acc, stale = record["val_acc"], 0
            result.state = state.copy()
            result.best_epoch, result.best_val_acc = epoch, best_acc
        else:
            stale += 1
            if stale >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                break
    result.state.meta.update({"best_epoch": result.best_epoch, "best_val_acc": result.best_val_acc})
    return result


HISTORY_KEYS = ("epoch", "ce", "clu", "bal", "mul", "div", "total", "val_acc")


def write_history(history: Sequence[dict], path) -> Path:
    """One JSON object per line with the fixed keys, in epoch order."""
    path = Path(path)
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps({k: rec[k] for k in HISTORY_KEYS}) + "\n")
    return path


def read_history(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
