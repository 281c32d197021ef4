"""Dense GCN encoder and the small MLPs used by the assignment and topology heads."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ShapeError

_ACTIVATIONS = {"relu": ad.relu, "sigmoid": ad.sigmoid, "none": lambda t: t}


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GcnParams:
    """Per-layer weights; entries may be ndarrays (inference) or Tensors (training)."""

    weights: list

    @classmethod
    def init(cls, rng: np.random.Generator, dims: Sequence[int]) -> GcnParams:
        return cls([glorot(rng, a, b) for a, b in zip(dims[:-1], dims[1:])])

    @property
    def dims(self) -> list[int]:
        return [w.shape[0] for w in self.weights] + [self.weights[-1].shape[1]]


@dataclass
class MlpParams:
    """Weights, biases and one activation tag per layer; the last tag is normally ``none``."""

    weights: list
    biases: list
    activations: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.activations:
            self.activations = ["relu"] * (len(self.weights) - 1) + ["none"]
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")

    @classmethod
    def init(cls, rng: np.random.Generator, dims: Sequence[int], hidden_activation: str = "relu") -> MlpParams:
        ws = [glorot(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
        bs = [np.zeros((1, b)) for b in dims[1:]]
        acts = [hidden_activation] * (len(ws) - 1) + ["none"]
        return cls(ws, bs, acts)


def gcn_forward(x, a_norm, params: GcnParams) -> ad.Tensor:
    """``H <- relu(A_norm H W)`` per layer, the final layer left linear."""
    h = ad.as_tensor(x)
    if h.cols != params.weights[0].shape[0]:
        raise ShapeError(f"features have {h.cols} columns, first GCN layer expects {params.weights[0].shape[0]}")
    n = len(params.weights)
    for i, w in enumerate(params.weights):
        h = ad.matmul(a_norm, ad.matmul(h, w))
        if i < n - 1:
            h = ad.relu(h)
    return h


def mlp_forward(x, params: MlpParams) -> ad.Tensor:
    h = ad.as_tensor(x)
    if h.cols != params.weights[0].shape[0]:
        raise ShapeError(f"input has {h.cols} columns, MLP expects {params.weights[0].shape[0]}")
    for w, b, act in zip(params.weights, params.biases, params.activations):
        h = _ACTIVATIONS[act](ad.matmul(h, w) + b)
    return h
