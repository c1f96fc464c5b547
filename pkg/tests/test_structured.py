import itertools
import math

import numpy as np
import pytest

from nnlp.autograd import Graph, GraphError
from nnlp.model import ParamStore
from nnlp.structured import (ChainSpec, StructuredLossSpec, alloc_chain_scorer,
                             alloc_memm, chain_score_node, crf_log_partition,
                             memm_greedy, memm_loss, part_values, score_parts,
                             structured_loss, two_best, viterbi)


def _chain_oracle(emissions, transitions):
    """Exhaustive enumeration: best sequence, its score, and log partition."""
    n, L = emissions.shape
    best, best_score = None, -math.inf
    total = -math.inf
    for seq in itertools.product(range(L), repeat=n):
        s = emissions[0, seq[0]]
        for i in range(1, n):
            s += transitions[seq[i - 1], seq[i]] + emissions[i, seq[i]]
        if s > best_score:
            best, best_score = list(seq), s
        total = np.logaddexp(total, s)
    return best, best_score, total


def _random_tables(rng, n, L, scale=2.0):
    return (rng.uniform(-scale, scale, (n, L)), rng.uniform(-scale, scale, (L, L)))


def test_viterbi_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n, L = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        em, tr = _random_tables(rng, n, L)
        labels, score = viterbi(em, tr)
        oracle_labels, oracle_score, _ = _chain_oracle(em, tr)
        assert labels == oracle_labels
        assert score == pytest.approx(oracle_score, abs=1e-9)


def test_viterbi_zero_transitions_is_positionwise_argmax():
    rng = np.random.default_rng(1)
    em = rng.uniform(-1, 1, (5, 4))
    labels, _ = viterbi(em, np.zeros((4, 4)))
    assert labels == list(np.argmax(em, axis=1))


def test_viterbi_all_equal_ties_to_zeros():
    labels, _ = viterbi(np.zeros((4, 3)), np.zeros((3, 3)))
    assert labels == [0, 0, 0, 0]


def test_two_best_matches_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(40):
        n, L = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        em, tr = _random_tables(rng, n, L)
        (best, s1), (second, s2) = two_best(em, tr)
        scored = []
        for seq in itertools.product(range(L), repeat=n):
            s = em[0, seq[0]]
            for i in range(1, n):
                s += tr[seq[i - 1], seq[i]] + em[i, seq[i]]
            scored.append((s, list(seq)))
        scored.sort(key=lambda x: -x[0])
        assert s1 == pytest.approx(scored[0][0], abs=1e-9)
        assert s2 == pytest.approx(scored[1][0], abs=1e-9)
        assert best != second


def _scored_chain(word_ids, seed=0, n_labels=3):
    spec = ChainSpec(n_labels=n_labels, d_emb=2, window=1, hidden=4)
    store = ParamStore(seed=seed)
    t = store.add_lookup("E", 6, 2)
    alloc_chain_scorer(store, spec, "c")
    rng = np.random.default_rng(seed + 100)
    for mat in store.params.values():
        mat[:] = rng.uniform(-1, 1, mat.shape)
    t.vectors[:] = rng.uniform(-1, 1, t.vectors.shape)
    g = Graph()
    parts = score_parts(g, store, spec, "c", "E", word_ids)
    return g, store, spec, parts


def test_score_parts_shapes_and_locality():
    g, store, spec, parts = _scored_chain([0, 1, 2, 3])
    assert parts.n == 4 and parts.n_labels == 3
    em, tr = part_values(g, parts)
    assert em.shape == (4, 3) and tr.shape == (3, 3)
    # emission scores depend only on the local window: same word ids, same row
    g2, _, _, parts2 = _scored_chain([0, 1, 2, 3])
    em2, _ = part_values(g2, parts2)
    assert np.array_equal(em, em2)


def test_zero_scorer_gives_zero_scores():
    g, store, spec, parts = _scored_chain([0, 1, 2])
    for mat in store.params.values():
        mat[:] = 0.0
    g2 = Graph()
    parts2 = score_parts(g2, store, spec, "c", "E", [0, 1, 2])
    em, tr = part_values(g2, parts2)
    assert np.array_equal(em, np.zeros((3, 3)))
    assert np.array_equal(tr, np.zeros((3, 3)))


def test_single_token_chain_has_no_transition_parts():
    g, store, spec, parts = _scored_chain([2])
    node = chain_score_node(g, parts, [1])
    em, tr = part_values(g, parts)
    assert float(g.value(node)[0, 0]) == pytest.approx(em[0, 1])


def test_crf_uniform_scores_log4():
    g, store, spec, parts = _scored_chain([0, 1], n_labels=2)
    for mat in store.params.values():
        mat[:] = 0.0
    g2 = Graph()
    parts2 = score_parts(g2, store, spec, "c", "E", [0, 1])
    loss = structured_loss(g2, StructuredLossSpec("crf"), parts2, [0, 1])
    g2.forward()
    assert float(g2.nodes[loss].value[0, 0]) == pytest.approx(math.log(4.0), abs=1e-12)


def test_crf_partition_matches_enumeration():
    rng = np.random.default_rng(3)
    for trial in range(30):
        n, L = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        g, store, spec, parts = _scored_chain(
            [int(rng.integers(6)) for _ in range(n)], seed=trial, n_labels=L)
        logz_node = crf_log_partition(g, parts)
        g.forward()
        em, tr = part_values(g, parts)
        _, _, logz = _chain_oracle(em, tr)
        assert float(g.nodes[logz_node].value[0, 0]) == pytest.approx(logz, abs=1e-8)


def test_crf_probabilities_sum_to_one():
    rng = np.random.default_rng(4)
    for trial in range(10):
        n, L = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        g, store, spec, parts = _scored_chain(
            [int(rng.integers(6)) for _ in range(n)], seed=trial + 40, n_labels=L)
        em, tr = part_values(g, parts)
        _, _, logz = _chain_oracle(em, tr)
        total = 0.0
        for seq in itertools.product(range(L), repeat=n):
            s = em[0, seq[0]]
            for i in range(1, n):
                s += tr[seq[i - 1], seq[i]] + em[i, seq[i]]
            total += math.exp(s - logz)
        assert total == pytest.approx(1.0, abs=1e-9)


def test_emission_shift_leaves_decisions_unchanged():
    rng = np.random.default_rng(5)
    em, tr = _random_tables(rng, 5, 4)
    labels, _ = viterbi(em, tr)
    labels_shifted, _ = viterbi(em + 7.5, tr)
    assert labels == labels_shifted
    _, _, logz = _chain_oracle(em, tr)
    _, _, logz_shifted = _chain_oracle(em + 7.5, tr)
    # the distribution is unchanged: every sequence score moves by n*shift
    for seq in [(0, 1, 2, 3, 0), (3, 3, 3, 3, 3)]:
        s = em[0, seq[0]] + sum(tr[seq[i - 1], seq[i]] + em[i, seq[i]]
                                for i in range(1, 5))
        s_shift = s + 5 * 7.5
        assert s - logz == pytest.approx(s_shift - logz_shifted, abs=1e-9)


def test_perceptron_loss_zero_at_argmax_and_nonnegative():
    rng = np.random.default_rng(6)
    for trial in range(10):
        g, store, spec, parts = _scored_chain([0, 1, 2], seed=trial + 60)
        em, tr = part_values(g, parts)
        best, _ = viterbi(em, tr)
        loss = structured_loss(g, StructuredLossSpec("perceptron"), parts, best)
        g.forward()
        assert float(g.nodes[loss].value[0, 0]) == 0.0
        g2 = Graph()
        parts2 = score_parts(g2, store, spec, "c", "E", [0, 1, 2])
        other = [(l + 1) % 3 for l in best]
        loss2 = structured_loss(g2, StructuredLossSpec("perceptron"), parts2, other)
        g2.forward()
        assert float(g2.nodes[loss2].value[0, 0]) >= 0.0


def test_margin_loss_uses_best_non_gold():
    g, store, spec, parts = _scored_chain([0, 1, 2, 3], seed=77)
    em, tr = part_values(g, parts)
    best, best_score = viterbi(em, tr)
    loss = structured_loss(g, StructuredLossSpec("margin", margin=1.0), parts, best)
    g.forward()
    # brute-force the runner-up
    scored = []
    for seq in itertools.product(range(3), repeat=4):
        s = em[0, seq[0]] + sum(tr[seq[i - 1], seq[i]] + em[i, seq[i]]
                                for i in range(1, 4))
        scored.append((s, list(seq)))
    scored.sort(key=lambda x: -x[0])
    runner = next(s for s, seq in scored if seq != best)
    expected = max(0.0, 1.0 + runner - best_score)
    assert float(g.nodes[loss].value[0, 0]) == pytest.approx(expected, abs=1e-9)


def test_margin_cost_augmented_zero_at_confident_gold():
    g, store, spec, parts = _scored_chain([0, 1], seed=78, n_labels=2)
    em, tr = part_values(g, parts)
    gold, _ = viterbi(em, tr)
    # raise the gold path well above everything else
    tmat = store.params["c.T"]
    spec_l = StructuredLossSpec("margin", cost_weight=0.5)
    g2 = Graph()
    parts2 = score_parts(g2, store, spec, "c", "E", [0, 1])
    loss = structured_loss(g2, spec_l, parts2, gold)
    g2.forward()
    assert float(g2.nodes[loss].value[0, 0]) >= 0.0


def test_structured_loss_validates_gold():
    g, store, spec, parts = _scored_chain([0, 1])
    with pytest.raises(GraphError, match="out of range"):
        structured_loss(g, StructuredLossSpec("crf"), parts, [0, 9])
    with pytest.raises(GraphError, match="length"):
        chain_score_node(g, parts, [0])


def test_crf_loss_gradient_check():
    from nnlp.autograd import grad_check

    spec = ChainSpec(n_labels=3, d_emb=2, window=1, hidden=4)
    store = ParamStore(seed=8)
    store.add_lookup("E", 6, 2)
    alloc_chain_scorer(store, spec, "c")
    rng = np.random.default_rng(123)
    for mat in store.params.values():
        mat[:] = rng.uniform(-0.9, 0.9, mat.shape)
    store.lookups["E"].vectors[:] = rng.uniform(-0.9, 0.9, (8, 2))

    def builder(g):
        parts = score_parts(g, store, spec, "c", "E", [0, 3, 1, 4])
        return structured_loss(g, StructuredLossSpec("crf"), parts, [2, 0, 1, 0])

    res = grad_check(store, builder, eps=1e-5, tol=1e-4, name="crf")
    assert res.passed


def _memm_setup(seed=0):
    spec = ChainSpec(n_labels=3, d_emb=2, window=1, hidden=4, d_label=2)
    store = ParamStore(seed=seed)
    store.add_lookup("E", 6, 2)
    alloc_memm(store, spec, "m")
    rng = np.random.default_rng(seed + 9)
    for mat in store.params.values():
        mat[:] = rng.uniform(-1, 1, mat.shape)
    store.lookups["E"].vectors[:] = rng.uniform(-1, 1, (8, 2))
    return spec, store


def test_memm_greedy_deterministic():
    spec, store = _memm_setup()
    g1, g2 = Graph(), Graph()
    a = memm_greedy(g1, store, spec, "m", "E", [0, 1, 2, 3])
    b = memm_greedy(g2, store, spec, "m", "E", [0, 1, 2, 3])
    assert a == b and len(a) == 4


def test_memm_zero_history_matches_emission_argmax():
    spec, store = _memm_setup(seed=3)
    # zero the rows of W1 that consume the previous-label embedding and the
    # label vectors themselves: history cannot influence the scores
    d_in = spec.d_in
    store.params["m.mlp.W1"][d_in:, :] = 0.0
    store.lookups["m.labels"].vectors[:] = 0.0
    g = Graph()
    pred = memm_greedy(g, store, spec, "m", "E", [0, 1, 2])
    expected = []
    for i in range(3):
        g2 = Graph()
        from nnlp.structured import window_node
        from nnlp.encoders import mlp_apply
        x = window_node(g2, store, spec, "E", [0, 1, 2], i)
        prev = g2.lookup(store, "m.labels", spec.n_labels)
        scores = mlp_apply(g2, store, spec.memm_mlp(), "m.mlp",
                           g2.concat([x, prev], axis=1))
        expected.append(int(np.argmax(g2.value(scores)[0])))
    assert pred == expected


def test_memm_single_position():
    spec, store = _memm_setup(seed=5)
    g = Graph()
    assert len(memm_greedy(g, store, spec, "m", "E", [4])) == 1


def test_memm_loss_teacher_forcing_gradcheck():
    from nnlp.autograd import grad_check

    spec, store = _memm_setup(seed=7)

    def builder(g):
        return memm_loss(g, store, spec, "m", "E", [0, 2, 4], [1, 0, 2])

    assert grad_check(store, builder).passed


def test_crf_emission_gradient_equals_marginals_minus_gold():
    """The CRF loss gradient w.r.t. an emission score is the marginal
    probability of that (position, label) part minus its gold indicator;
    the marginals here come from exhaustive enumeration."""
    n, L = 4, 3
    g, store, spec, parts = _scored_chain([0, 2, 4, 1], seed=321, n_labels=L)
    gold = [1, 0, 2, 1]
    loss = structured_loss(g, StructuredLossSpec("crf"), parts, gold)
    g.forward()
    g.backward(loss)

    em, tr = part_values(g, parts)
    _, _, logz = _chain_oracle(em, tr)
    marginals = np.zeros((n, L))
    trans_marginals = np.zeros((L, L))
    for seq in itertools.product(range(L), repeat=n):
        s = em[0, seq[0]]
        for i in range(1, n):
            s += tr[seq[i - 1], seq[i]] + em[i, seq[i]]
        p = math.exp(s - logz)
        for i, l in enumerate(seq):
            marginals[i, l] += p
        for a, b in zip(seq, seq[1:]):
            trans_marginals[a, b] += p

    for i in range(n):
        for l in range(L):
            grad = float(g.nodes[parts.emissions[i][l]].grad[0, 0])
            expected = marginals[i, l] - (1.0 if gold[i] == l else 0.0)
            assert grad == pytest.approx(expected, abs=1e-9)
    for a in range(L):
        for b in range(L):
            grad = float(g.nodes[parts.transitions[a][b]].grad[0, 0])
            gold_count = sum(1 for x, y in zip(gold, gold[1:]) if (x, y) == (a, b))
            expected = trans_marginals[a, b] - gold_count
            assert grad == pytest.approx(expected, abs=1e-9)
