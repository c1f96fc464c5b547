"""Input encoders c(.) and feed-forward / convolutional subgraph builders."""

from __future__ import annotations

from dataclasses import dataclass

from .autograd import Graph, GraphError, NodeId
from .model import ParamStore, constant

DISTANCE_BIN_EDGES = (1, 2, 3, 4, 10)  # bins: 1, 2, 3, 4, 5-10, 10+


def distance_bin(distance: int, edges: tuple[int, ...] = DISTANCE_BIN_EDGES) -> int:
    """Map a token distance onto its bin index (each bin owns an embedding row)."""
    d = abs(int(distance))
    for i, edge in enumerate(edges):
        if d <= edge:
            return i
    return len(edges)


@dataclass(frozen=True)
class FeatureSpec:
    """One core feature: a resolved row of a lookup table.

    ``tag`` records an optional position marker (e.g. "prev-word") for
    bookkeeping when vector sharing is disabled and tagged tokens get their
    own vocabulary entries; ``weight`` is the WCBOW weight a_i.
    """

    table: str
    index: int
    weight: float = 1.0
    tag: str | None = None


def _feature_nodes(g: Graph, store: ParamStore, features) -> list[NodeId]:
    if not features:
        raise GraphError("no features to encode")
    return [g.lookup(store, f.table, f.index) for f in features]


def encode_concat(g: Graph, store: ParamStore, features: list[FeatureSpec]) -> NodeId:
    """Concatenate the features' embedding vectors: x = [v(f1);v(f2);...]."""
    nodes = _feature_nodes(g, store, features)
    if len(nodes) == 1:
        return nodes[0]
    return g.concat(nodes, axis=1)


def encode_cbow(g: Graph, store: ParamStore, features: list[FeatureSpec],
                weighted: bool = False) -> NodeId:
    """(Weighted) average of the features' embedding vectors.

    Features are put in a canonical order first, making the encoding exactly
    permutation-invariant (bit-identical for reordered feature lists).
    """
    if not features:
        raise GraphError("no features to encode")
    feats = sorted(features, key=lambda f: (f.table, f.index, f.weight))
    dims = {store.lookups[f.table].dim for f in feats if f.table in store.lookups}
    if len(dims) > 1:
        raise GraphError(f"CBOW features must share one dimension, got {sorted(dims)}")
    nodes = _feature_nodes(g, store, feats)
    if not weighted:
        return nodes[0] if len(nodes) == 1 else g.avg_nodes(nodes)
    weights = [f.weight for f in feats]
    if any(w <= 0 for w in weights):
        raise GraphError("WCBOW weights must be positive")
    total = sum(weights)
    scaled = [g.scalar_mul(n, w / total) for n, w in zip(nodes, weights)]
    return scaled[0] if len(scaled) == 1 else g.sum_nodes(scaled)


@dataclass(frozen=True)
class MLPSpec:
    """Layer dims [d_in, d_1, ..., d_out]; zero hidden layers = perceptron.

    The final layer is always linear; each hidden layer applies its
    activation.  ``activations`` may be one tag for all hidden layers or one
    tag per hidden layer.
    """

    dims: tuple[int, ...]
    activations: str | tuple[str, ...] = "tanh"
    bias: bool = True

    def hidden_activations(self) -> list[str]:
        n_hidden = len(self.dims) - 2
        if isinstance(self.activations, str):
            return [self.activations] * n_hidden
        if len(self.activations) != n_hidden:
            raise GraphError(f"{n_hidden} hidden layers need {n_hidden} activation tags")
        return list(self.activations)


def alloc_mlp(store: ParamStore, spec: MLPSpec, name: str) -> None:
    """Create W1,b1,...  xavier weights, zero biases."""
    if len(spec.dims) < 2:
        raise GraphError("an MLP needs at least input and output dims")
    for layer, (d_in, d_out) in enumerate(zip(spec.dims, spec.dims[1:]), start=1):
        store.add_param(f"{name}.W{layer}", d_in, d_out)
        if spec.bias:
            store.add_param(f"{name}.b{layer}", 1, d_out, constant(0.0))


def mlp_apply(g: Graph, store: ParamStore, spec: MLPSpec, name: str, x: NodeId) -> NodeId:
    """Apply the perceptron / MLP1 / MLP2 stack allocated under ``name``."""
    if g.nodes[x].shape[1] != spec.dims[0]:
        raise GraphError(f"MLP input dim {g.nodes[x].shape[1]} != spec d_in {spec.dims[0]}")
    acts = spec.hidden_activations()
    h = x
    n_layers = len(spec.dims) - 1
    for layer in range(1, n_layers + 1):
        w = g.param(store, f"{name}.W{layer}")
        if spec.bias:
            h = g.affine(h, w, g.param(store, f"{name}.b{layer}"))
        else:
            h = g.matmul(h, w)
        if layer <= n_layers - 1:
            h = g.activation(acts[layer - 1], h)
    return h


@dataclass(frozen=True)
class ConvSpec:
    """1-d convolution over a token sequence plus a pooling rule.

    ``pooling`` is "max", "avg", ("kmax", k'), ("split", parts, inner) with
    inner in {max, avg}, or ("hier", ((window, pool_every), ...)) describing
    the stages after the first convolution.  Wide mode pads the sequence with
    k-1 *PAD* vectors on each side, giving n+k-1 windows; narrow mode gives
    n-k+1 windows.
    """

    window: int
    d_conv: int
    activation: str = "tanh"
    mode: str = "narrow"
    pooling: object = "max"

    def stages(self):
        if isinstance(self.pooling, tuple) and self.pooling[0] == "hier":
            return tuple(self.pooling[1])
        return ()


def alloc_conv(store: ParamStore, spec: ConvSpec, name: str, d_emb: int) -> None:
    if spec.window < 1:
        raise GraphError("convolution window must be >= 1")
    store.add_param(f"{name}.W", spec.window * d_emb, spec.d_conv)
    store.add_param(f"{name}.b", 1, spec.d_conv, constant(0.0))
    for s, (window, _pool) in enumerate(spec.stages(), start=1):
        store.add_param(f"{name}.W{s}", window * spec.d_conv, spec.d_conv)
        store.add_param(f"{name}.b{s}", 1, spec.d_conv, constant(0.0))


def conv_windows(g: Graph, store: ParamStore, spec: ConvSpec, name: str,
                 word_nodes: list[NodeId], pad_node: NodeId | None = None,
                 layer: str = "") -> list[NodeId]:
    """Filtered window vectors p_i = g([v_i;...;v_{i+k-1}] W + b).

    Returns one node per window: n-k+1 of them (narrow) or n+k-1 (wide).
    """
    k = spec.window
    seq = list(word_nodes)
    if spec.mode == "wide":
        if pad_node is None:
            raise GraphError("wide convolution needs a pad vector node")
        seq = [pad_node] * (k - 1) + seq + [pad_node] * (k - 1)
    elif spec.mode != "narrow":
        raise GraphError(f"unknown convolution mode {spec.mode!r}")
    if len(seq) < k:
        raise GraphError(f"sequence of {len(word_nodes)} too short for window {k}")
    w = g.param(store, f"{name}.W{layer}")
    b = g.param(store, f"{name}.b{layer}")
    out = []
    for i in range(len(seq) - k + 1):
        window = seq[i] if k == 1 else g.concat(seq[i:i + k], axis=1)
        out.append(g.activation(spec.activation, g.affine(window, w, b)))
    return out


def _pool_once(g: Graph, stacked: NodeId, kind: str) -> NodeId:
    if kind == "max":
        return g.max_pool_rows(stacked)
    if kind == "avg":
        return g.avg_pool_rows(stacked)
    raise GraphError(f"unknown inner pooling {kind!r}")


def conv_pool(g: Graph, store: ParamStore, spec: ConvSpec, name: str,
              word_nodes: list[NodeId], pad_node: NodeId | None = None) -> NodeId:
    """Convolution followed by the spec's pooling; returns one row vector."""
    windows = conv_windows(g, store, spec, name, word_nodes, pad_node)
    pooling = spec.pooling

    if isinstance(pooling, tuple) and pooling[0] == "hier":
        seq = windows
        for s, (window, pool_every) in enumerate(spec.stages(), start=1):
            grouped = []
            for start in range(0, len(seq), pool_every):
                chunk = seq[start:start + pool_every]
                grouped.append(chunk[0] if len(chunk) == 1
                               else g.max_pool_rows(g.concat(chunk, axis=0)))
            if len(grouped) < window:
                raise GraphError(
                    f"hierarchical stage {s}: {len(grouped)} vectors too few for window {window}")
            stage_spec = ConvSpec(window, spec.d_conv, spec.activation, "narrow", "max")
            seq = conv_windows(g, store, stage_spec, name, grouped, layer=str(s))
        return seq[0] if len(seq) == 1 else g.max_pool_rows(g.concat(seq, axis=0))

    stacked = windows[0] if len(windows) == 1 else g.concat(windows, axis=0)
    if pooling == "max":
        return g.max_pool_rows(stacked)
    if pooling == "avg":
        return g.avg_pool_rows(stacked)
    if isinstance(pooling, tuple) and pooling[0] == "kmax":
        return g.kmax_pool_rows(stacked, pooling[1])
    if isinstance(pooling, tuple) and pooling[0] == "split":
        _, parts, inner = pooling
        m = len(windows)
        if parts > m:
            raise GraphError(f"split pooling: {parts} groups exceed {m} windows")
        bounds = [round(i * m / parts) for i in range(parts + 1)]
        pooled = []
        for lo, hi in zip(bounds, bounds[1:]):
            chunk = windows[lo:hi]
            pooled.append(chunk[0] if len(chunk) == 1
                          else _pool_once(g, g.concat(chunk, axis=0), inner))
        return g.concat(pooled, axis=1) if len(pooled) > 1 else pooled[0]
    raise GraphError(f"unknown pooling spec {pooling!r}")
