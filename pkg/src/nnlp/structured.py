"""Search-based structured prediction for linear-chain tagging.

A chain over n positions with L labels decomposes into n emission parts and
n-1 transition parts; the structure score is the sum of its part scores.
Emission parts are scored by a shared window MLP, transitions by a learned
L x L matrix.  Decoding is exact max-sum DP; the CRF partition function is
built as a polynomial-size log-sum-exp subgraph so gradients flow through it
like through any other node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Graph, GraphError, NodeId
from .encoders import MLPSpec, alloc_mlp, mlp_apply
from .model import ParamStore
from .objectives import LOG_FLOOR


@dataclass(frozen=True)
class ChainSpec:
    """Feature/scoring configuration for one tagging model."""

    n_labels: int
    d_emb: int
    window: int = 1          # words each side of the focus
    hidden: int = 16
    activation: str = "tanh"
    d_label: int = 8         # previous-label embedding dim (MEMM only)

    @property
    def d_in(self) -> int:
        return (2 * self.window + 1) * self.d_emb

    def mlp(self) -> MLPSpec:
        return MLPSpec((self.d_in, self.hidden, self.n_labels), self.activation)

    def memm_mlp(self) -> MLPSpec:
        return MLPSpec((self.d_in + self.d_label, self.hidden, self.n_labels),
                       self.activation)


@dataclass(frozen=True)
class StructuredLossSpec:
    """kind in {perceptron, margin, crf}; decoding is always exact DP.

    ``cost_weight`` > 0 switches the margin loss to cost-augmented decoding
    with a Hamming-distance margin instead of the fixed margin.
    """

    kind: str
    margin: float = 1.0
    cost_weight: float = 0.0


@dataclass
class ChainDecomposition:
    """Scored parts of one sentence: node grids kept for gradient flow."""

    n: int
    n_labels: int
    emission_rows: list[NodeId]            # n nodes, each 1 x L
    emissions: list[list[NodeId]]          # n x L scalar nodes
    transitions: list[list[NodeId]]        # L x L scalar nodes


def alloc_chain_scorer(store: ParamStore, spec: ChainSpec, name: str) -> None:
    alloc_mlp(store, spec.mlp(), f"{name}.mlp")
    store.add_param(f"{name}.T", spec.n_labels, spec.n_labels)


def _window_ids(word_ids: list[int], i: int, w: int, pad_index: int) -> list[int]:
    n = len(word_ids)
    return [word_ids[j] if 0 <= j < n else pad_index
            for j in range(i - w, i + w + 1)]


def window_node(g: Graph, store: ParamStore, spec: ChainSpec, table: str,
                word_ids: list[int], i: int) -> NodeId:
    pad = store.lookups[table].pad_index
    ids = _window_ids(word_ids, i, spec.window, pad)
    embs = [g.lookup(store, table, wid) for wid in ids]
    return g.concat(embs, axis=1) if len(embs) > 1 else embs[0]


def score_parts(g: Graph, store: ParamStore, spec: ChainSpec, name: str,
                table: str, word_ids: list[int]) -> ChainDecomposition:
    """Score every emission and transition part with the shared networks."""
    if not word_ids:
        raise GraphError("cannot score an empty sentence")
    L = spec.n_labels
    rows, emissions = [], []
    for i in range(len(word_ids)):
        x = window_node(g, store, spec, table, word_ids, i)
        row = mlp_apply(g, store, spec.mlp(), f"{name}.mlp", x)
        rows.append(row)
        emissions.append([g.pick(row, l) for l in range(L)])
    tmat = g.param(store, f"{name}.T")
    transitions = [[g.pick(tmat, l, row=lp) for l in range(L)] for lp in range(L)]
    return ChainDecomposition(len(word_ids), L, rows, emissions, transitions)


def part_values(g: Graph, parts: ChainDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """Numeric (emissions n x L, transitions L x L) for decoding."""
    g.forward()
    em = np.stack([g.nodes[r].value[0] for r in parts.emission_rows])
    tr = np.array([[g.nodes[parts.transitions[a][b]].value[0, 0]
                    for b in range(parts.n_labels)] for a in range(parts.n_labels)])
    return em, tr


def viterbi(emissions: np.ndarray, transitions: np.ndarray) -> tuple[list[int], float]:
    """Exact best labeling by max-sum DP; ties go to the lowest label index."""
    n, L = emissions.shape
    score = emissions[0].copy()
    back = np.zeros((n, L), dtype=int)
    for i in range(1, n):
        cand = score[:, None] + transitions            # prev x cur
        back[i] = np.argmax(cand, axis=0)              # first max = lowest prev
        score = cand[back[i], np.arange(L)] + emissions[i]
    best = int(np.argmax(score))
    labels = [best]
    for i in range(n - 1, 0, -1):
        best = int(back[i, best])
        labels.append(best)
    labels.reverse()
    path_score = float(emissions[0, labels[0]]
                       + sum(transitions[a, b] + emissions[i + 1, b]
                             for i, (a, b) in enumerate(zip(labels, labels[1:]))))
    return labels, path_score


def two_best(emissions: np.ndarray, transitions: np.ndarray):
    """The two highest-scoring distinct labelings, best first.

    Each DP state keeps its top-2 (score, prev label, prev rank) entries, so
    the global second best is exact.
    """
    n, L = emissions.shape
    # entries[i][l] = list of up to 2 tuples (score, prev_label, prev_rank)
    entries = [[[] for _ in range(L)] for _ in range(n)]
    for l in range(L):
        entries[0][l] = [(float(emissions[0, l]), -1, -1)]
    for i in range(1, n):
        for l in range(L):
            cands = []
            for lp in range(L):
                for rank, (s, _, _) in enumerate(entries[i - 1][lp]):
                    cands.append((s + float(transitions[lp, l]) + float(emissions[i, l]),
                                  lp, rank))
            cands.sort(key=lambda c: (-c[0], c[1], c[2]))
            entries[i][l] = cands[:2]
    finals = []
    for l in range(L):
        for rank, (s, _, _) in enumerate(entries[n - 1][l]):
            finals.append((s, l, rank))
    finals.sort(key=lambda c: (-c[0], c[1], c[2]))

    def backtrace(l, rank):
        labels = []
        for i in range(n - 1, -1, -1):
            labels.append(l)
            _, lp, prank = entries[i][l][rank]
            l, rank = lp, prank
        return labels[::-1]

    results = [(backtrace(l, r), s) for s, l, r in finals[:2]]
    if len(results) == 1:
        results.append(results[0])  # L == 1: only one labeling exists
    return results


def chain_score_node(g: Graph, parts: ChainDecomposition, labels: list[int]) -> NodeId:
    """Node summing the part scores of one labeling."""
    if len(labels) != parts.n:
        raise GraphError(f"labeling length {len(labels)} != chain length {parts.n}")
    for l in labels:
        if not 0 <= l < parts.n_labels:
            raise GraphError(f"label {l} out of range")
    terms = [parts.emissions[i][l] for i, l in enumerate(labels)]
    terms += [parts.transitions[a][b] for a, b in zip(labels, labels[1:])]
    return terms[0] if len(terms) == 1 else g.sum_nodes(terms)


def _logsumexp_scalars(g: Graph, scalars: list[NodeId]) -> NodeId:
    """log(sum(exp(s))) over scalar nodes with running-max stabilization.

    The max enters the graph as a node; its subgradient contributions cancel
    exactly, so the composite's gradient is the softmax of the inputs.
    """
    if len(scalars) == 1:
        return scalars[0]
    col = g.concat(scalars, axis=0)
    m = g.max_pool_rows(col)
    m_rep = g.concat([m] * len(scalars), axis=0)
    shifted = g.minus(col, m_rep)
    return g.add(g.log(g.sum_elems(g.exp(shifted))), m)


def crf_log_partition(g: Graph, parts: ChainDecomposition) -> NodeId:
    """log Z over all L^n labelings via the forward (log-sum-exp) DP."""
    L = parts.n_labels
    alpha = [parts.emissions[0][l] for l in range(L)]
    for i in range(1, parts.n):
        alpha = [g.add(_logsumexp_scalars(
                           g, [g.add(alpha[lp], parts.transitions[lp][l]) for lp in range(L)]),
                       parts.emissions[i][l])
                 for l in range(L)]
    return _logsumexp_scalars(g, alpha)


def structured_loss(g: Graph, spec: StructuredLossSpec, parts: ChainDecomposition,
                    gold: list[int]) -> NodeId:
    """Scalar loss node for one sentence against its gold labeling."""
    gold_node = chain_score_node(g, parts, gold)
    if spec.kind == "crf":
        return g.minus(crf_log_partition(g, parts), gold_node)

    em, tr = part_values(g, parts)
    if spec.kind == "perceptron":
        pred, _ = viterbi(em, tr)
        return g.minus(chain_score_node(g, parts, pred), gold_node)
    if spec.kind == "margin":
        if spec.cost_weight > 0.0:
            # cost-augmented: decode against emissions raised by the Hamming cost
            aug = em + spec.cost_weight
            aug[np.arange(parts.n), gold] -= spec.cost_weight
            pred, _ = viterbi(aug, tr)
            hamming = float(spec.cost_weight * sum(p != t for p, t in zip(pred, gold)))
            diff = g.minus(chain_score_node(g, parts, pred), gold_node)
            return g.relu(g.scalar_add(diff, hamming))
        candidates = two_best(em, tr)
        pred = next((labels for labels, _ in candidates if labels != gold),
                    candidates[0][0])
        diff = g.minus(chain_score_node(g, parts, pred), gold_node)
        return g.relu(g.scalar_add(diff, spec.margin))
    raise GraphError(f"unknown structured loss kind {spec.kind!r}")


# greedy / MEMM baselines ----------------------------------------------------

def alloc_memm(store: ParamStore, spec: ChainSpec, name: str) -> None:
    """MEMM scorer: window features plus an embedding of the previous label."""
    alloc_mlp(store, spec.memm_mlp(), f"{name}.mlp")
    # one row per label plus a begin-of-sentence row at index L
    store.add_lookup(f"{name}.labels", spec.n_labels + 1, spec.d_label)


def _memm_scores(g: Graph, store: ParamStore, spec: ChainSpec, name: str,
                 table: str, word_ids: list[int], i: int, prev_label: int) -> NodeId:
    window = window_node(g, store, spec, table, word_ids, i)
    prev = g.lookup(store, f"{name}.labels", prev_label)
    x = g.concat([window, prev], axis=1)
    return mlp_apply(g, store, spec.memm_mlp(), f"{name}.mlp", x)


def memm_greedy(g: Graph, store: ParamStore, spec: ChainSpec, name: str,
                table: str, word_ids: list[int]) -> list[int]:
    """Left-to-right greedy decoding, each step conditioned on the previous
    prediction (begin marker at position 0)."""
    labels: list[int] = []
    prev = spec.n_labels  # begin-of-sentence row
    for i in range(len(word_ids)):
        scores = _memm_scores(g, store, spec, name, table, word_ids, i, prev)
        probs = g.softmax(scores)
        prev = int(np.argmax(g.value(probs)[0]))
        labels.append(prev)
    return labels


def memm_loss(g: Graph, store: ParamStore, spec: ChainSpec, name: str,
              table: str, word_ids: list[int], gold: list[int]) -> NodeId:
    """Teacher-forced per-position cross-entropy, summed over the sentence."""
    if len(gold) != len(word_ids):
        raise GraphError("gold labeling length mismatch")
    losses = []
    prev = spec.n_labels
    for i, t in enumerate(gold):
        if not 0 <= t < spec.n_labels:
            raise GraphError(f"label {t} out of range")
        scores = _memm_scores(g, store, spec, name, table, word_ids, i, prev)
        probs = g.softmax(scores)
        losses.append(g.negate(g.log(g.pick(probs, t), floor=LOG_FLOOR)))
        prev = t
    return losses[0] if len(losses) == 1 else g.sum_nodes(losses)
