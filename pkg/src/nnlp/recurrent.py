"""Recurrent cells behind one step/unroll interface, plus stack-RNNs.

Each variant defines the transition R(state, x) and the output read-out O:
SRNN and GRU expose their whole state, the LSTM exposes only h, and the SCRN
exposes the concatenation of its slow and fast components.  The same
parameters serve every position; unrolling just chains steps, and training
an unrolled graph is ordinary backpropagation over it.

Dropout, when used with these cells, belongs between layers only, never on
the recurrent connection; ``deep_rnn`` takes an optional inter-layer rate.
Unrolling always spans the full sequence (no truncation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Graph, GraphError, NodeId
from .model import IDENTITY, ParamStore, constant


@dataclass(frozen=True)
class RNNSpec:
    """Variant-tagged cell definition.

    ``activation`` applies to the SRNN only; ``alpha`` is the SCRN's slow
    interpolation weight; ``gate_bias`` adds bias terms to LSTM gates (off
    reproduces the bias-free printed equations) with the forget bias started
    at 1.0; ``identity_init`` starts the SRNN recurrent matrix at I with zero
    bias (the ReLU state-copying recipe).
    """

    variant: str                       # srnn | lstm | gru | scrn
    d_x: int
    d_h: int
    activation: str = "tanh"
    alpha: float = 0.5
    gate_bias: bool = True
    forget_bias_one: bool = True
    identity_init: bool = False

    @property
    def state_dim(self) -> int:
        return 2 * self.d_h if self.variant in ("lstm", "scrn") else self.d_h


@dataclass
class RNNState:
    """Per-step state: s for SRNN/GRU, (c, h) for LSTM/SCRN."""

    variant: str
    s: NodeId | None = None
    c: NodeId | None = None
    h: NodeId | None = None

    def output(self, g: Graph) -> NodeId:
        """The y the cell exposes for this state."""
        if self.variant in ("srnn", "gru"):
            return self.s
        if self.variant == "lstm":
            return self.h
        if self.variant == "scrn":
            return g.concat([self.c, self.h], axis=1)
        raise GraphError(f"unknown RNN variant {self.variant!r}")


_LSTM_GATES = ("i", "f", "o", "g")
_GRU_GATES = (("xz", "hz"), ("xr", "hr"), ("xh", "hg"))


def alloc_rnn(store: ParamStore, spec: RNNSpec, name: str) -> None:
    """Create the variant's parameters plus a trainable initial state."""
    dx, dh = spec.d_x, spec.d_h
    v = spec.variant
    if v == "srnn":
        store.add_param(f"{name}.Wx", dx, dh)
        store.add_param(f"{name}.Ws", dh, dh, IDENTITY if spec.identity_init else None)
        store.add_param(f"{name}.b", 1, dh, constant(0.0))
        store.add_param(f"{name}.s0", 1, dh, constant(0.0))
    elif v == "lstm":
        for gate in _LSTM_GATES:
            store.add_param(f"{name}.Wx{gate}", dx, dh)
            store.add_param(f"{name}.Wh{gate}", dh, dh)
            if spec.gate_bias:
                fill = 1.0 if (gate == "f" and spec.forget_bias_one) else 0.0
                store.add_param(f"{name}.b{gate}", 1, dh, constant(fill))
        store.add_param(f"{name}.c0", 1, dh, constant(0.0))
        store.add_param(f"{name}.h0", 1, dh, constant(0.0))
    elif v == "gru":
        for xg, hg in _GRU_GATES:
            store.add_param(f"{name}.W{xg}", dx, dh)
            store.add_param(f"{name}.W{hg}", dh, dh)
        store.add_param(f"{name}.s0", 1, dh, constant(0.0))
    elif v == "scrn":
        if not 0.0 < spec.alpha < 1.0:
            raise GraphError(f"SCRN alpha must be in (0,1), got {spec.alpha}")
        store.add_param(f"{name}.Wx1", dx, dh)
        store.add_param(f"{name}.Wx2", dx, dh)
        store.add_param(f"{name}.Wh", dh, dh)
        store.add_param(f"{name}.Wc", dh, dh)
        store.add_param(f"{name}.c0", 1, dh, constant(0.0))
        store.add_param(f"{name}.h0", 1, dh, constant(0.0))
    else:
        raise GraphError(f"unknown RNN variant {v!r}")


def initial_state(g: Graph, store: ParamStore, spec: RNNSpec, name: str) -> RNNState:
    if spec.variant in ("srnn", "gru"):
        return RNNState(spec.variant, s=g.param(store, f"{name}.s0"))
    return RNNState(spec.variant, c=g.param(store, f"{name}.c0"),
                    h=g.param(store, f"{name}.h0"))


def _check_x(g: Graph, spec: RNNSpec, x: NodeId) -> None:
    shape = g.nodes[x].shape
    if shape != (1, spec.d_x):
        raise GraphError(f"RNN input must be (1,{spec.d_x}), got {shape}")


def rnn_step(g: Graph, store: ParamStore, spec: RNNSpec, name: str,
             state: RNNState, x: NodeId) -> tuple[RNNState, NodeId]:
    """One application of R; returns (new state, its output y)."""
    _check_x(g, spec, x)
    v = spec.variant
    if v == "srnn":
        pre = g.add(g.add(g.matmul(x, g.param(store, f"{name}.Wx")),
                          g.matmul(state.s, g.param(store, f"{name}.Ws"))),
                    g.param(store, f"{name}.b"))
        s = g.activation(spec.activation, pre)
        new = RNNState(v, s=s)
        return new, s

    if v == "lstm":
        def gate(tag, fn):
            pre = g.add(g.matmul(x, g.param(store, f"{name}.Wx{tag}")),
                        g.matmul(state.h, g.param(store, f"{name}.Wh{tag}")))
            if spec.gate_bias:
                pre = g.add(pre, g.param(store, f"{name}.b{tag}"))
            return fn(pre)

        i = gate("i", g.sigmoid)
        f = gate("f", g.sigmoid)
        o = gate("o", g.sigmoid)
        u = gate("g", g.tanh)
        c = g.add(g.cmul(state.c, f), g.cmul(u, i))
        h = g.cmul(g.tanh(c), o)
        new = RNNState(v, c=c, h=h)
        return new, h

    if v == "gru":
        def gate(xtag, htag, fn, hin):
            return fn(g.add(g.matmul(x, g.param(store, f"{name}.W{xtag}")),
                            g.matmul(hin, g.param(store, f"{name}.W{htag}"))))

        z = gate("xz", "hz", g.sigmoid, state.s)
        r = gate("xr", "hr", g.sigmoid, state.s)
        h = g.tanh(g.add(g.matmul(x, g.param(store, f"{name}.Wxh")),
                         g.matmul(g.cmul(state.s, r), g.param(store, f"{name}.Whg"))))
        ones = g.constant(np.ones((1, spec.d_h)))
        s = g.add(g.cmul(g.minus(ones, z), state.s), g.cmul(z, h))
        new = RNNState(v, s=s)
        return new, s

    if v == "scrn":
        c = g.add(g.scalar_mul(g.matmul(x, g.param(store, f"{name}.Wx1")), 1.0 - spec.alpha),
                  g.scalar_mul(state.c, spec.alpha))
        h = g.sigmoid(g.add(g.add(g.matmul(x, g.param(store, f"{name}.Wx2")),
                                  g.matmul(state.h, g.param(store, f"{name}.Wh"))),
                            g.matmul(c, g.param(store, f"{name}.Wc"))))
        new = RNNState(v, c=c, h=h)
        return new, new.output(g)

    raise GraphError(f"unknown RNN variant {v!r}")


def unroll(g: Graph, store: ParamStore, spec: RNNSpec, name: str,
           xs: list[NodeId], regime: str = "transducer",
           state: RNNState | None = None):
    """Chain rnn_step over xs.

    acceptor/encoder regimes return the final output only; the transducer
    returns the outputs at every position.
    """
    if not xs:
        raise GraphError("unroll of an empty sequence")
    if regime not in ("acceptor", "encoder", "transducer"):
        raise GraphError(f"unknown unroll regime {regime!r}")
    if state is None:
        state = initial_state(g, store, spec, name)
    ys = []
    for x in xs:
        state, y = rnn_step(g, store, spec, name, state, x)
        ys.append(y)
    return ys if regime == "transducer" else ys[-1]


def bi_rnn(g: Graph, store: ParamStore, fwd_spec: RNNSpec, bwd_spec: RNNSpec,
           fwd_name: str, bwd_name: str, xs: list[NodeId]) -> list[NodeId]:
    """Forward and backward runs; position i yields [y_f_i ; y_b_i]."""
    if not xs:
        raise GraphError("bi_rnn over an empty sequence")
    fwd = unroll(g, store, fwd_spec, fwd_name, xs, "transducer")
    bwd = unroll(g, store, bwd_spec, bwd_name, list(reversed(xs)), "transducer")
    bwd = list(reversed(bwd))
    return [g.concat([f, b], axis=1) for f, b in zip(fwd, bwd)]


def deep_rnn(g: Graph, store: ParamStore, specs: list[RNNSpec], names: list[str],
             xs: list[NodeId], dropout_rate: float = 0.0, train: bool = False) -> list[NodeId]:
    """Stacked transducers: layer j consumes the outputs of layer j-1.

    Dropout, if any, sits between layers only (never across time).
    """
    if len(specs) != len(names):
        raise GraphError("one name per layer spec required")
    seq = xs
    for layer, (spec, name) in enumerate(zip(specs, names)):
        expect = spec.d_x
        got = g.nodes[seq[0]].shape[1]
        if got != expect:
            raise GraphError(f"layer {layer}: input dim {got} != spec d_x {expect}")
        if layer > 0 and dropout_rate > 0.0:
            seq = [g.dropout(x, dropout_rate, train) for x in seq]
        seq = unroll(g, store, spec, name, seq, "transducer")
    return seq


def encoder_decoder(g: Graph, store: ParamStore, enc_spec: RNNSpec, dec_spec: RNNSpec,
                    enc_name: str, dec_name: str, xs: list[NodeId],
                    teacher: list[NodeId], reverse_input: bool = False) -> list[NodeId]:
    """Encode xs to one vector, seed the decoder with it, transduce teacher inputs.

    The decoder's step-t input is teacher[t-1] (a learned start vector at
    t=1); supervision attaches to the returned outputs only, and gradients
    flow through the summary vector into the encoder.
    """
    if not xs:
        raise GraphError("encoder-decoder needs a nonempty source")
    if not teacher:
        raise GraphError("encoder-decoder needs a nonempty target")
    src = list(reversed(xs)) if reverse_input else list(xs)
    summary = unroll(g, store, enc_spec, enc_name, src, "encoder")
    d_sum = g.nodes[summary].shape[1]
    if d_sum != dec_spec.d_h:
        raise GraphError(f"encoder output dim {d_sum} != decoder state dim {dec_spec.d_h}")
    if dec_spec.variant in ("srnn", "gru"):
        state = RNNState(dec_spec.variant, s=summary)
    else:
        zeros = g.constant(np.zeros((1, dec_spec.d_h)))
        state = RNNState(dec_spec.variant, c=zeros, h=summary)
    start = g.param(store, f"{dec_name}.start")
    inputs = [start] + list(teacher[:-1])
    ys = []
    for x in inputs:
        state, y = rnn_step(g, store, dec_spec, dec_name, state, x)
        ys.append(y)
    return ys


def alloc_encoder_decoder(store: ParamStore, enc_spec: RNNSpec, dec_spec: RNNSpec,
                          enc_name: str, dec_name: str) -> None:
    alloc_rnn(store, enc_spec, enc_name)
    alloc_rnn(store, dec_spec, dec_name)
    store.add_param(f"{dec_name}.start", 1, dec_spec.d_x)


# persistent stacks ----------------------------------------------------------

class PersistentStack:
    """Immutable stack: push/pop return new handles, old ones stay valid.

    Stored as a pointer into a shared tree of (value, parent) nodes; the
    lifetime of all handles therefore forms a tree whose root is the empty
    stack.
    """

    __slots__ = ("value", "parent", "size")

    def __init__(self, value=None, parent: "PersistentStack | None" = None):
        self.value = value
        self.parent = parent
        self.size = 0 if parent is None else parent.size + 1

    def is_empty(self) -> bool:
        return self.parent is None

    def push(self, value) -> "PersistentStack":
        return PersistentStack(value, self)

    def pop(self) -> tuple[object, "PersistentStack"]:
        if self.parent is None:
            raise IndexError("pop from an empty stack")
        return self.value, self.parent

    def peek(self):
        if self.parent is None:
            raise IndexError("peek at an empty stack")
        return self.value

    def __len__(self) -> int:
        return self.size

    def __iter__(self):
        """Top-down iteration."""
        node = self
        while node.parent is not None:
            yield node.value
            node = node.parent

    def to_list(self) -> list:
        """Bottom-up contents."""
        return list(self)[::-1]


@dataclass(frozen=True)
class StackRNNState:
    """A persistent stack whose handle carries the RNN state encoding it.

    ``parent`` is the handle this one was pushed from, so pop is O(1) and
    reuses the parent's already-built RNN state.
    """

    stack: PersistentStack
    rnn: RNNState
    parent: "StackRNNState | None"

    def output(self, g: Graph) -> NodeId:
        return self.rnn.output(g)


def stack_rnn_empty(g: Graph, store: ParamStore, spec: RNNSpec, name: str) -> StackRNNState:
    return StackRNNState(PersistentStack(), initial_state(g, store, spec, name), None)


def stack_push(g: Graph, store: ParamStore, spec: RNNSpec, name: str,
               st: StackRNNState, x: NodeId) -> StackRNNState:
    new_rnn, _ = rnn_step(g, store, spec, name, st.rnn, x)
    return StackRNNState(st.stack.push(x), new_rnn, st)


def stack_pop(st: StackRNNState) -> StackRNNState:
    if st.parent is None:
        raise IndexError("pop from an empty stack")
    return st.parent
