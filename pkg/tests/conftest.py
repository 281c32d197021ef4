from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from gip import autodiff as ad
from gip.graphs import AttributedGraph

ROOT = Path(__file__).resolve().parents[1]
MUTAG_DIR = Path(os.environ.get("GIP_MUTAG_DIR", ROOT / "data" / "MUTAG"))

FD_STEP = 1e-5
FD_TOL = 1e-4


def numeric_grad(fn, arrays: dict[str, np.ndarray], key: str, step: float = FD_STEP) -> np.ndarray:
    """Central differences of the scalar ``fn(arrays)`` with respect to ``arrays[key]``."""
    base = arrays[key]
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus = {**arrays, key: base.copy()}
        minus = {**arrays, key: base.copy()}
        plus[key][idx] += step
        minus[key][idx] -= step
        grad[idx] = (fn(plus) - fn(minus)) / (2 * step)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(build, arrays: dict[str, np.ndarray], keys=None, step=FD_STEP, tol=FD_TOL) -> dict[str, float]:
    """``build(tensors) -> 1x1 Tensor``. Returns the worst relative error per key, asserting each ≤ tol."""
    keys = sorted(arrays) if keys is None else keys
    tape = ad.Tape()
    bound = {k: tape.param(v, k) for k, v in arrays.items()}
    grads = tape.backward(build(bound))

    def value(arrs):
        return build({k: ad.as_tensor(v) for k, v in arrs.items()}).item()

    errs = {}
    for k in keys:
        num = numeric_grad(value, arrays, k, step)
        errs[k] = rel_err(grads[bound[k]], num)
        assert errs[k] <= tol, f"{k}: relative error {errs[k]:.3g}"
    return errs


def random_graph(rng: np.random.Generator, n: int, d: int, p: float = 0.5, weighted: bool = False) -> AttributedGraph:
    upper = np.triu(rng.random((n, n)) < p, 1).astype(float)
    if weighted:
        upper *= rng.uniform(0.2, 1.5, (n, n))
    adj = upper + upper.T
    return AttributedGraph(rng.normal(size=(n, d)), adj)


def path_adj(n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return a


def k2() -> AttributedGraph:
    return AttributedGraph(np.ones((2, 1)), np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed together at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
