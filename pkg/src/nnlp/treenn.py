"""Recursive neural networks over binary parse trees.

A labeled binary tree over x_1..x_n is a set of production rules
(A -> B,C, i,k,j): leaves look like (A -> A,A, i,i,i) and internal rules
split their span at k.  Encoding assigns every node an inside state vector;
a leaf's state is its word's embedding row, an internal node's state is the
composition of its children's states.
"""

from __future__ import annotations

from dataclasses import dataclass

from .autograd import Graph, GraphError, NodeId
from .model import ParamStore


class TreeParseError(ValueError):
    """Malformed s-expression."""


@dataclass(frozen=True)
class ProductionRule:
    parent: str
    left: str
    right: str
    i: int
    k: int
    j: int

    @property
    def is_leaf(self) -> bool:
        return self.i == self.k == self.j

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.parent, self.i, self.j)


@dataclass
class BinaryTree:
    tokens: list[str]
    rules: list[ProductionRule]     # leaves first, then internal rules bottom-up

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def root(self) -> ProductionRule:
        return self.rules[-1]

    def validate(self) -> None:
        n = self.n
        leaves = [r for r in self.rules if r.is_leaf]
        internal = [r for r in self.rules if not r.is_leaf]
        if len(leaves) != n or len(internal) != n - 1:
            raise TreeParseError(
                f"tree over {n} words needs {n} leaf and {n - 1} internal rules, "
                f"got {len(leaves)} and {len(internal)}")
        spans = {(r.i, r.j) for r in self.rules}
        if (1, n) not in spans:
            raise TreeParseError("no root rule spanning the whole sentence")
        if len(spans) != len(self.rules):
            raise TreeParseError("duplicate spans in rule set")


def _tokenize_sexp(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_sexp(text: str) -> BinaryTree:
    """Parse one parenthesized labeled binary tree, e.g. "(S (NP ...) (VP ...))"."""
    toks = _tokenize_sexp(text)
    if not toks:
        raise TreeParseError("empty tree")
    pos = 0

    def parse_node():
        nonlocal pos
        if toks[pos] != "(":
            raise TreeParseError(f"expected '(' at token {pos}, got {toks[pos]!r}")
        pos += 1
        if pos >= len(toks) or toks[pos] in "()":
            raise TreeParseError("missing node label")
        label = toks[pos]
        pos += 1
        children = []
        words = []
        while pos < len(toks) and toks[pos] != ")":
            if toks[pos] == "(":
                children.append(parse_node())
            else:
                words.append(toks[pos])
                pos += 1
        if pos >= len(toks):
            raise TreeParseError("unbalanced parentheses")
        pos += 1  # consume ')'
        if children and words:
            raise TreeParseError(f"node {label!r} mixes words and subtrees")
        if words:
            if len(words) != 1:
                raise TreeParseError(f"pre-terminal {label!r} must cover one word, got {words}")
            return ("leaf", label, words[0])
        if len(children) != 2:
            raise TreeParseError(f"node {label!r} has {len(children)} children; trees must be binary")
        return ("node", label, children)

    top = parse_node()
    if pos != len(toks):
        raise TreeParseError("trailing input after tree")

    tokens: list[str] = []
    leaf_rules: list[ProductionRule] = []
    internal_rules: list[ProductionRule] = []

    def build(node) -> tuple[str, int, int]:
        """Returns (label, i, j) for the subtree, emitting rules bottom-up."""
        if node[0] == "leaf":
            _, label, word = node
            tokens.append(word)
            i = len(tokens)
            leaf_rules.append(ProductionRule(label, label, label, i, i, i))
            return (label, i, i)
        _, label, (lc, rc) = node
        lb, li, lj = build(lc)
        rb, ri, rj = build(rc)
        if ri != lj + 1:
            raise TreeParseError("child spans do not tile")
        internal_rules.append(ProductionRule(label, lb, rb, li, lj, rj))
        return (label, li, rj)

    build(top)
    tree = BinaryTree(tokens, leaf_rules + internal_rules)
    tree.validate()
    return tree


@dataclass(frozen=True)
class RecNNSpec:
    """Composition rule for internal nodes.

    untied: g([s_B;s_C] W) with one shared 2d x d matrix.
    labels: g([s_B;s_C;v(A);v(B)] W) with label embeddings of dim d_nt.
    per-pair: g([s_B;s_C] W_{BC}); unseen (B,C) pairs fall back to a shared
    default matrix.
    """

    composition: str                 # untied | labels | per-pair
    dim: int
    d_nt: int = 8
    activation: str = "tanh"


@dataclass
class RecNNParams:
    """Handle returned by alloc_recnn: parameter names plus label indexing."""

    name: str
    label_index: dict[str, int]
    pair_names: dict[tuple[str, str], str]


def _pair_param(name: str, b: str, c: str) -> str:
    return f"{name}.W[{b},{c}]"


def recnn_handle(spec: RecNNSpec, name: str, labels: list[str],
                 pairs: list[tuple[str, str]] | None = None) -> RecNNParams:
    """Deterministic parameter-name handle (no allocation)."""
    label_index = {lab: i for i, lab in enumerate(sorted(set(labels)))}
    pair_names: dict[tuple[str, str], str] = {}
    if spec.composition == "per-pair":
        for b, c in sorted(set(pairs or [])):
            pair_names[(b, c)] = _pair_param(name, b, c)
    return RecNNParams(name, label_index, pair_names)


def alloc_recnn(store: ParamStore, spec: RecNNSpec, name: str,
                labels: list[str], pairs: list[tuple[str, str]] | None = None) -> RecNNParams:
    d = spec.dim
    handle = recnn_handle(spec, name, labels, pairs)
    if spec.composition == "untied":
        store.add_param(f"{name}.W", 2 * d, d)
    elif spec.composition == "labels":
        store.add_param(f"{name}.W", 2 * d + 2 * spec.d_nt, d)
        store.add_lookup(f"{name}.labels", len(handle.label_index), spec.d_nt)
    elif spec.composition == "per-pair":
        store.add_param(f"{name}.W", 2 * d, d)  # fallback for unseen pairs
        for pname in handle.pair_names.values():
            store.add_param(pname, 2 * d, d)
    else:
        raise GraphError(f"unknown composition {spec.composition!r}")
    return handle


def recnn_encode(g: Graph, store: ParamStore, spec: RecNNSpec, params: RecNNParams,
                 tree: BinaryTree, word_table: str,
                 word_ids: list[int]) -> dict[tuple[str, int, int], NodeId]:
    """Inside state vectors for every tree node, children before parents."""
    if len(word_ids) != tree.n:
        raise GraphError(f"{tree.n}-word tree got {len(word_ids)} word ids")
    if store.lookups[word_table].dim != spec.dim:
        raise GraphError("word embedding dim must equal the composition dim")
    states: dict[tuple[str, int, int], NodeId] = {}
    by_span: dict[tuple[int, int], NodeId] = {}

    for rule in sorted(tree.rules, key=lambda r: (r.j - r.i, r.i)):
        if rule.is_leaf:
            node = g.lookup(store, word_table, word_ids[rule.i - 1])
        else:
            left = by_span.get((rule.i, rule.k))
            right = by_span.get((rule.k + 1, rule.j))
            if left is None or right is None:
                raise GraphError(f"rule {rule} is missing a child state")
            parts = [left, right]
            if spec.composition == "labels":
                idx = params.label_index
                parts.append(g.lookup(store, f"{params.name}.labels",
                                      idx.get(rule.parent, -1)))
                parts.append(g.lookup(store, f"{params.name}.labels",
                                      idx.get(rule.left, -1)))
                w = g.param(store, f"{params.name}.W")
            elif spec.composition == "per-pair":
                pname = params.pair_names.get((rule.left, rule.right), f"{params.name}.W")
                w = g.param(store, pname)
            else:
                w = g.param(store, f"{params.name}.W")
            node = g.activation(spec.activation, g.matmul(g.concat(parts, axis=1), w))
        states[rule.key] = node
        by_span[(rule.i, rule.j)] = node
    return states
