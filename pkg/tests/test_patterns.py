from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gip import autodiff as ad
from gip.encoder import MlpParams
from gip.graphs import AttributedGraph
from gip.kernel import KernelConfig, kernel_distance, normalized_similarity, rw_kernel
from gip.patterns import (
    InteractivePattern,
    MsLossConfig,
    PatternBank,
    diversity_loss,
    generate_pattern_adjacency,
    multi_similarity_loss,
    pattern_distances,
    pattern_similarities,
)

from conftest import check_gradients, random_graph


def _mlp2(r, d, hidden=5, zero=False):
    mlp = MlpParams.init(r, [2 * d, hidden, 1])
    if zero:
        mlp = MlpParams([np.zeros_like(w) for w in mlp.weights], [np.zeros_like(b) for b in mlp.biases])
    return mlp


def ms_reference(dist: np.ndarray, labels, classes, g1, g2, lam) -> float:
    """Scalar loop over samples and patterns."""
    total = 0.0
    for m, y in enumerate(labels):
        pos = sum(math.exp(g1 * (dist[m, t] - lam)) for t in range(len(classes)) if classes[t] == y)
        neg = sum(math.exp(-g2 * (dist[m, t] - lam)) for t in range(len(classes)) if classes[t] != y)
        total += math.log1p(pos) / g1 + math.log1p(neg) / g2
    return total / len(labels)


# --- topology generation ---------------------------------------------------------


def test_zero_mlp_gives_half_everywhere(rng):
    a = generate_pattern_adjacency(rng.normal(size=(4, 3)), _mlp2(rng, 3, zero=True)).value
    np.testing.assert_array_equal(a, 0.5 * (1 - np.eye(4)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_generated_adjacency_is_exactly_symmetric(seed, n):
    r = np.random.default_rng(seed)
    a = generate_pattern_adjacency(r.normal(size=(n, 3)), _mlp2(r, 3)).value
    assert np.array_equal(a, a.T) and np.all(np.diag(a) == 0) and np.all((a >= 0) & (a <= 1))


def test_three_node_pattern_matches_hand_chain(rng):
    x = rng.normal(size=(3, 2))
    mlp = _mlp2(rng, 2)
    w0, w1 = mlp.weights
    b0, b1 = mlp.biases

    def score(i, j):
        h = np.maximum(np.concatenate([x[i], x[j]]) @ w0 + b0[0], 0.0)
        return float(h @ w1[:, 0] + b1[0, 0])

    want = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            if i != j:
                want[i, j] = 1.0 / (1.0 + math.exp(-0.5 * (score(i, j) + score(j, i))))
    np.testing.assert_allclose(generate_pattern_adjacency(x, mlp).value, want, atol=1e-12)


def test_single_node_pattern_rejected(rng):
    with pytest.raises(ValueError):
        generate_pattern_adjacency(np.ones((1, 2)), _mlp2(rng, 2))


def test_bank_requires_class_order():
    p = lambda c: InteractivePattern(c, np.ones((2, 1)), np.zeros((2, 2)))  # noqa: E731
    assert PatternBank([p(0), p(0), p(1), p(1)], 2).per_class == 2
    with pytest.raises(ValueError):
        PatternBank([p(0), p(1), p(0), p(1)], 2)
    with pytest.raises(ValueError):
        PatternBank([p(0), p(0), p(1)], 2)


# --- similarities and distances -----------------------------------------------------


def _bank(r, n=3, d=2):
    mlp = _mlp2(r, d)
    pats = []
    for c in (0, 1):
        x = r.normal(size=(n, d))
        pats.append(InteractivePattern(c, x, generate_pattern_adjacency(x, mlp).value))
    return PatternBank(pats, 2)


def test_similarities_match_independent_kernel_calls(rng):
    bank = _bank(rng)
    g = random_graph(rng, 5, 2, weighted=True)
    sims = pattern_similarities(g, bank, KernelConfig(3)).value[0]
    np.testing.assert_allclose(sims, [rw_kernel(g, p, KernelConfig(3)).item() for p in bank.patterns], rtol=1e-12)


def test_pattern_equal_to_graph_gives_self_kernel(rng):
    bank = _bank(rng)
    p = bank[1]
    g = AttributedGraph(p.x, p.adj)
    assert pattern_similarities(g, bank).value[0, 1] == pytest.approx(rw_kernel(g, g).item(), rel=1e-12)


def test_zero_graph_features_zero_every_sim(rng):
    bank = _bank(rng)
    g = AttributedGraph(np.zeros((4, 2)), random_graph(rng, 4, 1).adj)
    np.testing.assert_array_equal(pattern_similarities(g, bank).value, np.zeros((1, 2)))


def test_pattern_distances_match_kernel_distance(rng):
    bank = _bank(rng)
    g = random_graph(rng, 4, 2)
    sims = pattern_similarities(g, bank)
    k_pp = ad.concat_cols([rw_kernel(p, p) for p in bank.patterns])
    got = pattern_distances(sims, rw_kernel(g, g), k_pp).value[0]
    np.testing.assert_allclose(got, [kernel_distance(g, p).item() for p in bank.patterns], rtol=1e-10)


# --- multi-similarity loss ----------------------------------------------------------


def test_ms_loss_at_margin_is_ln2():
    cfg = MsLossConfig(2.0, 2.0, 1.0)
    assert multi_similarity_loss(np.ones((1, 2)), [0], [0, 1], cfg).item() == pytest.approx(math.log(2), abs=1e-12)


def test_ms_loss_single_class_has_no_negative_term():
    cfg = MsLossConfig(2.0, 50.0, 1.0)
    got = multi_similarity_loss(np.full((1, 2), 1.0), [0], [0, 0], cfg).item()
    assert got == pytest.approx(math.log(3) / 2, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ms_loss_matches_scalar_reference(seed):
    r = np.random.default_rng(seed)
    dist = r.uniform(0, 3, size=(4, 6))
    labels, classes = r.integers(0, 3, size=4).tolist(), [0, 0, 1, 1, 2, 2]
    got = multi_similarity_loss(dist, labels, classes, MsLossConfig(2.0, 50.0, 1.0)).item()
    assert got == pytest.approx(ms_reference(dist, labels, classes, 2.0, 50.0, 1.0), rel=1e-10)


def test_ms_loss_gradients_reach_pattern_features(rng):
    g = random_graph(rng, 4, 2, weighted=True)
    mlp = _mlp2(rng, 2)
    arrays = {"p0": rng.normal(size=(3, 2)), "p1": rng.normal(size=(3, 2))}

    def build(t):
        pats = [InteractivePattern(c, t[k], generate_pattern_adjacency(t[k], mlp)) for c, k in enumerate(("p0", "p1"))]
        dist = ad.concat_cols([kernel_distance(g, p) for p in pats])
        return multi_similarity_loss(dist, [0], [0, 1], MsLossConfig(2.0, 2.0, 1.0))

    check_gradients(build, arrays)


# --- diversity loss -----------------------------------------------------------------


def _class_bank(xs_adjs):
    return PatternBank([InteractivePattern(0, x, a) for x, a in xs_adjs], 1)


def test_diversity_zero_when_all_below_threshold():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    bank = _class_bank([(np.array([[1.0, 0.0], [1.0, 0.0]]), a), (np.array([[0.0, 1.0], [0.0, 1.0]]), a)])
    assert diversity_loss(bank, delta2=0.5).item() == 0.0


def test_diversity_hinge_value():
    # single nodes: K = (x1 x2)^2 = 0.9 against delta 0.5
    x1, x2 = np.array([[1.0]]), np.array([[math.sqrt(0.9)]])
    z = np.zeros((1, 1))
    bank = _class_bank([(x1, z), (x2, z)])
    assert diversity_loss(bank, delta2=0.5, normalized=False).item() == pytest.approx(0.4, abs=1e-12)


def test_duplicated_pattern_pair_costs_half(rng):
    x = rng.normal(size=(3, 2))
    a = generate_pattern_adjacency(x, _mlp2(rng, 2)).value
    bank = _class_bank([(x, a), (x.copy(), a.copy())])
    assert normalized_similarity(bank[0], bank[1]).item() == pytest.approx(1.0, abs=1e-12)
    assert diversity_loss(bank, delta2=0.5).item() == pytest.approx(0.5, abs=1e-12)


def test_diversity_only_counts_same_class_pairs(rng):
    x = rng.normal(size=(3, 2))
    a = generate_pattern_adjacency(x, _mlp2(rng, 2)).value
    bank = PatternBank([InteractivePattern(c, x, a) for c in (0, 1)], 2)
    assert diversity_loss(bank).item() == 0.0


def test_diversity_with_gram_matches_direct(rng):
    mlp = _mlp2(rng, 2)
    xs = [rng.normal(size=(3, 2)) for _ in range(3)]
    bank = _class_bank([(x, generate_pattern_adjacency(x, mlp).value) for x in xs])
    gram = np.array([[rw_kernel(p, q).item() for q in bank.patterns] for p in bank.patterns])
    direct = diversity_loss(bank, delta2=-1.0).item()
    assert diversity_loss(bank, delta2=-1.0, gram=ad.as_tensor(gram)).item() == pytest.approx(direct, rel=1e-12)
