"""Define-by-run computation graph with reverse-mode gradient accumulation.

A Graph is an append-only arena of nodes.  Node indices are assigned in
construction order, which is therefore a valid topological order: arguments
always precede their consumers.  The forward pass evaluates nodes in index
order; the backward pass seeds the designated scalar node with 1 and pushes
each node's gradient to its arguments in reverse index order.

Every op tag registers a forward rule and the matching local derivative rule
together; a tag missing either is rejected at registration time.

A Graph is confined to one thread; distinct graphs may run concurrently as
long as nobody updates the shared parameters mid-evaluation (updates are
exclusive with forward/backward).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import ShapeError, Tensor, cube, hardtanh, relu, sigmoid, tanhcube

NodeId = int


class GraphError(ValueError):
    """Graph construction or execution error."""


class Node:
    __slots__ = ("kind", "inputs", "shape", "extra", "value", "grad")

    def __init__(self, kind, inputs, shape, extra=None):
        self.kind = kind
        self.inputs = inputs            # ids of argument nodes, all earlier
        self.shape = shape              # fixed at construction
        self.extra = extra              # op-specific static parameters
        self.value = None               # ndarray once evaluated
        self.grad = None                # ndarray, written by backward only


class OpDef:
    __slots__ = ("name", "infer", "forward", "backward")

    def __init__(self, name, infer, forward, backward):
        self.name = name
        self.infer = infer
        self.forward = forward
        self.backward = backward


_OPS: dict[str, OpDef] = {}


def register_op(name: str, infer: Callable, forward: Callable, backward: Callable) -> None:
    """Register an op; forward and backward must be supplied together."""
    if forward is None or backward is None:
        raise ValueError(f"op {name!r} must register forward and backward together")
    if name in _OPS:
        raise ValueError(f"op {name!r} already registered")
    _OPS[name] = OpDef(name, infer, forward, backward)


def op_names() -> list[str]:
    return sorted(_OPS)


def _need(cond, msg):
    if not cond:
        raise ShapeError(msg)


def _same_shapes(kind, shapes):
    first = shapes[0]
    for s in shapes[1:]:
        _need(s == first, f"{kind}: shape mismatch {first} vs {s}")
    return first


class Graph:
    """A per-example computation graph: built fresh, run, then dropped wholesale.

    ``seed`` drives stochastic node construction (dropout masks are drawn once
    at node-creation time) so repeated forward passes are bit-identical.
    """

    def __init__(self, seed: int = 0):
        self.nodes: list[Node] = []
        self.loss: NodeId | None = None
        self.rng = np.random.default_rng(seed)
        self._evaluated = 0
        self._param_nodes: dict[tuple[int, str], NodeId] = {}
        self._lookup_nodes: dict[tuple[int, str, int], NodeId] = {}

    def __len__(self):
        return len(self.nodes)

    def add_node(self, kind: str, inputs: list[NodeId], extra=None) -> NodeId:
        opdef = _OPS.get(kind)
        if opdef is None:
            raise GraphError(f"unknown op kind {kind!r}")
        n = len(self.nodes)
        for i in inputs:
            if not (0 <= i < n):
                raise GraphError(f"{kind}: input id {i} not in graph (size {n})")
        try:
            shape = opdef.infer(self, [self.nodes[i].shape for i in inputs], extra)
        except ShapeError:
            raise
        except (TypeError, IndexError, ValueError) as e:
            raise GraphError(f"{kind}: bad arity or arguments "
                             f"({len(inputs)} inputs): {e}") from e
        node = Node(kind, tuple(inputs), shape, extra)
        self.nodes.append(node)
        return n

    # evaluation

    def forward(self, recompute: bool = False) -> Tensor:
        """Evaluate all (or all not-yet-evaluated) nodes in index order."""
        if not self.nodes:
            raise GraphError("forward on an empty graph")
        start = 0 if recompute else self._evaluated
        for i in range(start, len(self.nodes)):
            node = self.nodes[i]
            xs = [self.nodes[j].value for j in node.inputs]
            try:
                node.value = _OPS[node.kind].forward(self, node, xs)
            except FloatingPointError as e:  # pragma: no cover - defensive
                raise GraphError(f"numeric failure at node {i} ({node.kind}): {e}")
            if not np.all(np.isfinite(node.value)):
                raise GraphError(f"non-finite value at node {i} ({node.kind})")
        self._evaluated = len(self.nodes)
        return Tensor(self.nodes[-1].value)

    def value(self, nid: NodeId) -> np.ndarray:
        """Value of one node, evaluating pending nodes if needed."""
        if nid >= self._evaluated:
            self.forward()
        return self.nodes[nid].value

    def backward(self, from_id: NodeId | None = None) -> None:
        """Accumulate gradients of the scalar node ``from_id`` into all nodes."""
        if from_id is None:
            from_id = len(self.nodes) - 1
        if self._evaluated <= from_id:
            raise GraphError("backward before forward")
        top = self.nodes[from_id]
        if top.shape != (1, 1):
            raise GraphError(f"backward needs a 1x1 loss node, got {top.shape}")
        self.loss = from_id
        for node in self.nodes:  # all nodes, so no stale grads survive a re-run
            node.grad = np.zeros(node.shape)
        top.grad[0, 0] = 1.0
        for i in range(from_id, -1, -1):
            node = self.nodes[i]
            if not node.inputs:
                continue
            xs = [self.nodes[j].value for j in node.inputs]
            gs = _OPS[node.kind].backward(self, node, xs, node.grad)
            for j, g in zip(node.inputs, gs):
                if g is not None:
                    self.nodes[j].grad += g

    # node constructors

    def constant(self, value) -> NodeId:
        t = value if isinstance(value, Tensor) else Tensor(value)
        return self.add_node("constant-input", [], extra=t.data)

    def param(self, store, name: str) -> NodeId:
        """Reference a named parameter; one node per (store, name) per graph."""
        key = (id(store), name)
        nid = self._param_nodes.get(key)
        if nid is None:
            if name not in store.params:
                raise GraphError(f"unknown parameter {name!r}")
            nid = self.add_node("parameter-ref", [], extra=(store, name))
            self._param_nodes[key] = nid
        return nid

    def lookup(self, store, table: str, index: int) -> NodeId:
        """Reference one row of a lookup table (out-of-range maps to *UNK*)."""
        tab = store.lookups.get(table)
        if tab is None:
            raise GraphError(f"unknown lookup table {table!r}")
        row = tab.resolve(index)
        key = (id(store), table, row)
        nid = self._lookup_nodes.get(key)
        if nid is None:
            nid = self.add_node("lookup-ref", [], extra=(store, table, row))
            self._lookup_nodes[key] = nid
        return nid

    def add(self, a, b):
        return self.add_node("add", [a, b])

    def minus(self, a, b):
        return self.add_node("minus", [a, b])

    def cmul(self, a, b):
        return self.add_node("cmul", [a, b])

    def matmul(self, a, b):
        return self.add_node("matmul", [a, b])

    def concat(self, parts, axis: int = 1):
        return self.add_node("concat", list(parts), extra=axis)

    def affine(self, x, w, b):
        return self.add_node("affine", [x, w, b])

    def negate(self, a):
        return self.add_node("negate", [a])

    def scalar_add(self, a, c: float):
        return self.add_node("scalar-add", [a], extra=float(c))

    def scalar_mul(self, a, c: float):
        # not its own op kind: composed from cmul with a filled constant
        shape = self.nodes[a].shape
        return self.cmul(a, self.constant(np.full(shape, float(c))))

    def activation(self, tag: str, a):
        if tag not in ("sigmoid", "tanh", "hardtanh", "relu", "cube", "tanhcube"):
            raise GraphError(f"unknown activation {tag!r}")
        return self.add_node(tag, [a])

    def sigmoid(self, a):
        return self.add_node("sigmoid", [a])

    def tanh(self, a):
        return self.add_node("tanh", [a])

    def relu(self, a):
        return self.add_node("relu", [a])

    def exp(self, a):
        return self.add_node("exp", [a])

    def log(self, a, floor: float | None = None):
        return self.add_node("log", [a], extra=floor)

    def softmax(self, a):
        return self.add_node("softmax", [a])

    def pick(self, a, col: int, row: int = 0):
        return self.add_node("pick", [a], extra=(int(row), int(col)))

    def sum_elems(self, a):
        return self.add_node("sum-elems", [a])

    def sum_nodes(self, parts):
        return self.add_node("sum-nodes", list(parts))

    def avg_nodes(self, parts):
        return self.add_node("avg-nodes", list(parts))

    def max_pool_rows(self, a):
        return self.add_node("max-pool-rows", [a])

    def avg_pool_rows(self, a):
        return self.add_node("avg-pool-rows", [a])

    def kmax_pool_rows(self, a, k: int):
        return self.add_node("kmax-pool-rows", [a], extra=int(k))

    def dropout(self, a, rate: float = 0.5, train: bool = True):
        """Inverted dropout: kept entries scaled by 1/(1-rate) at train time.

        The default rate drops half of the activations.  The mask is drawn
        once, here, so every forward over this graph sees the same mask
        (deterministic replay, finite-difference friendly).
        """
        if not (0.0 <= rate < 1.0):
            raise GraphError(f"dropout rate must be in [0,1), got {rate}")
        mask = None
        if train:
            shape = self.nodes[a].shape
            keep = self.rng.random(shape) >= rate
            mask = keep / (1.0 - rate)
        return self.add_node("dropout", [a], extra=(rate, bool(train), mask))

    def normalize_tanh(self, a):
        return self.add_node("normalize-tanh", [a])


# op implementations ---------------------------------------------------------

def _infer_nullary_const(g, shapes, extra):
    return tuple(np.asarray(extra).shape)


def _infer_param(g, shapes, extra):
    store, name = extra
    return store.params[name].shape


def _infer_lookup(g, shapes, extra):
    store, table, row = extra
    return (1, store.lookups[table].dim)


register_op(
    "constant-input",
    _infer_nullary_const,
    lambda g, node, xs: node.extra,
    lambda g, node, xs, gout: [],
)

register_op(
    "parameter-ref",
    _infer_param,
    lambda g, node, xs: node.extra[0].params[node.extra[1]],
    lambda g, node, xs, gout: [],
)

register_op(
    "lookup-ref",
    _infer_lookup,
    lambda g, node, xs: node.extra[0].lookups[node.extra[1]].vectors[node.extra[2]:node.extra[2] + 1],
    lambda g, node, xs, gout: [],
)

register_op(
    "add",
    lambda g, shapes, extra: _same_shapes("add", shapes),
    lambda g, node, xs: xs[0] + xs[1],
    lambda g, node, xs, gout: [gout, gout],
)

register_op(
    "minus",
    lambda g, shapes, extra: _same_shapes("minus", shapes),
    lambda g, node, xs: xs[0] - xs[1],
    lambda g, node, xs, gout: [gout, -gout],
)

register_op(
    "cmul",
    lambda g, shapes, extra: _same_shapes("cmul", shapes),
    lambda g, node, xs: xs[0] * xs[1],
    lambda g, node, xs, gout: [gout * xs[1], gout * xs[0]],
)


def _infer_matmul(g, shapes, extra):
    (r1, c1), (r2, c2) = shapes
    _need(c1 == r2, f"matmul: shape mismatch ({r1},{c1}) x ({r2},{c2})")
    return (r1, c2)


register_op(
    "matmul",
    _infer_matmul,
    lambda g, node, xs: xs[0] @ xs[1],
    lambda g, node, xs, gout: [gout @ xs[1].T, xs[0].T @ gout],
)


def _infer_concat(g, shapes, extra):
    axis = extra
    _need(shapes, "concat: empty input list")
    _need(axis in (0, 1), f"concat: axis must be 0 or 1, got {axis}")
    other = 1 - axis
    base = shapes[0]
    for s in shapes[1:]:
        _need(s[other] == base[other], f"concat: mismatched shapes {base} vs {s}")
    total = sum(s[axis] for s in shapes)
    return (total, base[1]) if axis == 0 else (base[0], total)


def _backward_concat(g, node, xs, gout):
    axis = node.extra
    gs = []
    off = 0
    for x in xs:
        size = x.shape[axis]
        if axis == 0:
            gs.append(gout[off:off + size, :])
        else:
            gs.append(gout[:, off:off + size])
        off += size
    return gs


register_op(
    "concat",
    _infer_concat,
    lambda g, node, xs: np.concatenate(xs, axis=node.extra),
    _backward_concat,
)


def _infer_affine(g, shapes, extra):
    (rx, cx), (rw, cw), (rb, cb) = shapes
    _need(cx == rw, f"affine: input dim {cx} does not match weight rows {rw}")
    _need(rb == 1 and cb == cw, f"affine: bias shape ({rb},{cb}) must be (1,{cw})")
    return (rx, cw)


register_op(
    "affine",
    _infer_affine,
    lambda g, node, xs: xs[0] @ xs[1] + xs[2],
    lambda g, node, xs, gout: [gout @ xs[1].T, xs[0].T @ gout,
                               gout.sum(axis=0, keepdims=True)],
)

register_op(
    "negate",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: -xs[0],
    lambda g, node, xs, gout: [-gout],
)

register_op(
    "scalar-add",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: xs[0] + node.extra,
    lambda g, node, xs, gout: [gout],
)

register_op(
    "sigmoid",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: sigmoid(xs[0]),
    lambda g, node, xs, gout: [gout * node.value * (1.0 - node.value)],
)

register_op(
    "tanh",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: np.tanh(xs[0]),
    lambda g, node, xs, gout: [gout * (1.0 - node.value ** 2)],
)

# derivative defined as 0 at the clip points x = +-1
register_op(
    "hardtanh",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: hardtanh(xs[0]),
    lambda g, node, xs, gout: [gout * ((xs[0] > -1.0) & (xs[0] < 1.0))],
)

# derivative defined as 0 at x = 0
register_op(
    "relu",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: relu(xs[0]),
    lambda g, node, xs, gout: [gout * (xs[0] > 0.0)],
)

register_op(
    "cube",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: cube(xs[0]),
    lambda g, node, xs, gout: [gout * 3.0 * xs[0] ** 2],
)

register_op(
    "tanhcube",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: tanhcube(xs[0]),
    lambda g, node, xs, gout: [gout * (1.0 - node.value ** 2) * (3.0 * xs[0] ** 2 + 1.0)],
)

register_op(
    "exp",
    lambda g, shapes, extra: shapes[0],
    lambda g, node, xs: np.exp(xs[0]),
    lambda g, node, xs, gout: [gout * node.value],
)


def _forward_log(g, node, xs):
    x = xs[0]
    floor = node.extra
    if floor is None:
        if np.any(x <= 0.0):
            raise GraphError("log of a non-positive value")
        return np.log(x)
    # clamped variant for loss plumbing; gradient still uses the raw input
    return np.log(np.maximum(x, floor))


register_op(
    "log",
    lambda g, shapes, extra: shapes[0],
    _forward_log,
    lambda g, node, xs, gout: [gout / xs[0]],
)


def _forward_softmax(g, node, xs):
    x = xs[0]
    z = x - x.max(axis=1, keepdims=True)  # value-identical, overflow-safe
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _backward_softmax(g, node, xs, gout):
    y = node.value
    dot = (gout * y).sum(axis=1, keepdims=True)
    return [y * (gout - dot)]


register_op(
    "softmax",
    lambda g, shapes, extra: shapes[0],
    _forward_softmax,
    _backward_softmax,
)


def _infer_pick(g, shapes, extra):
    row, col = extra
    (r, c) = shapes[0]
    _need(0 <= row < r and 0 <= col < c, f"pick: index ({row},{col}) out of range for {shapes[0]}")
    return (1, 1)


def _backward_pick(g, node, xs, gout):
    row, col = node.extra
    gx = np.zeros_like(xs[0])
    gx[row, col] = gout[0, 0]
    return [gx]


register_op(
    "pick",
    _infer_pick,
    lambda g, node, xs: xs[0][node.extra[0]:node.extra[0] + 1,
                              node.extra[1]:node.extra[1] + 1].copy(),
    _backward_pick,
)

register_op(
    "sum-elems",
    lambda g, shapes, extra: (1, 1),
    lambda g, node, xs: xs[0].sum().reshape(1, 1),
    lambda g, node, xs, gout: [np.full_like(xs[0], gout[0, 0])],
)

register_op(
    "sum-nodes",
    lambda g, shapes, extra: _same_shapes("sum-nodes", shapes),
    lambda g, node, xs: np.add.reduce(xs),
    lambda g, node, xs, gout: [gout] * len(xs),
)

register_op(
    "avg-nodes",
    lambda g, shapes, extra: _same_shapes("avg-nodes", shapes),
    lambda g, node, xs: np.add.reduce(xs) / len(xs),
    lambda g, node, xs, gout: [gout / len(xs)] * len(xs),
)


def _infer_pool(g, shapes, extra):
    (r, c) = shapes[0]
    _need(r >= 1, "pooling over an empty tensor")
    return (1, c)


def _backward_max_pool(g, node, xs, gout):
    x = xs[0]
    idx = np.argmax(x, axis=0)  # ties: lowest row index wins
    gx = np.zeros_like(x)
    gx[idx, np.arange(x.shape[1])] = gout[0]
    return [gx]


register_op(
    "max-pool-rows",
    _infer_pool,
    lambda g, node, xs: xs[0].max(axis=0, keepdims=True),
    _backward_max_pool,
)

register_op(
    "avg-pool-rows",
    _infer_pool,
    lambda g, node, xs: xs[0].mean(axis=0, keepdims=True),
    lambda g, node, xs, gout: [np.repeat(gout / xs[0].shape[0], xs[0].shape[0], axis=0)],
)


def _infer_kmax(g, shapes, extra):
    k = extra
    (r, c) = shapes[0]
    _need(1 <= k <= r, f"kmax-pool-rows: k={k} out of range for {r} rows")
    return (1, k * c)


def _kmax_select(x, k):
    # per column: row indices of the top-k values, kept in original row order;
    # ties prefer the earliest row
    order = np.argsort(-x, axis=0, kind="stable")[:k]
    return np.sort(order, axis=0)


def _forward_kmax(g, node, xs):
    x = xs[0]
    k = node.extra
    sel = _kmax_select(x, k)
    picked = np.take_along_axis(x, sel, axis=0)  # k x c, original order
    return picked.reshape(1, -1)


def _backward_kmax(g, node, xs, gout):
    x = xs[0]
    k = node.extra
    sel = _kmax_select(x, k)
    gx = np.zeros_like(x)
    gk = gout.reshape(k, x.shape[1])
    np.add.at(gx, (sel, np.broadcast_to(np.arange(x.shape[1]), sel.shape)), gk)
    return [gx]


register_op(
    "kmax-pool-rows",
    _infer_kmax,
    _forward_kmax,
    _backward_kmax,
)


def _forward_dropout(g, node, xs):
    rate, train, mask = node.extra
    if not train:
        return xs[0]
    return xs[0] * mask


def _backward_dropout(g, node, xs, gout):
    rate, train, mask = node.extra
    if not train:
        return [gout]
    return [gout * mask]


register_op(
    "dropout",
    lambda g, shapes, extra: shapes[0],
    _forward_dropout,
    _backward_dropout,
)


def _forward_normalize_tanh(g, node, xs):
    t = np.tanh(xs[0])
    r = np.sqrt((t * t).sum())
    if r < 1e-12:
        return np.zeros_like(t)
    return t / r


def _backward_normalize_tanh(g, node, xs, gout):
    t = np.tanh(xs[0])
    r = np.sqrt((t * t).sum())
    if r < 1e-12:
        return [np.zeros_like(t)]
    dot = (gout * t).sum()
    return [(1.0 - t * t) * (gout / r - t * dot / r ** 3)]


register_op(
    "normalize-tanh",
    lambda g, shapes, extra: shapes[0],
    _forward_normalize_tanh,
    _backward_normalize_tanh,
)


# gradient checking ----------------------------------------------------------

@dataclass
class GradCheckResult:
    """Outcome of comparing backward gradients with central differences."""

    name: str
    max_rel_err: float
    n_checked: int
    n_skipped: int
    tol: float
    worst: str = ""
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.max_rel_err <= self.tol

    def __str__(self):
        tag = "ok  " if self.passed else "FAIL"
        return f"{tag} {self.name}: max rel err {self.max_rel_err:.3e} over {self.n_checked} entries ({self.worst})"


def _rel_err(a: float, n: float, zero_floor: float) -> float | None:
    m = max(abs(a), abs(n))
    if m < zero_floor:
        return None  # both effectively zero: below finite-difference noise
    return abs(a - n) / m


def grad_check(store, builder, eps: float = 1e-5, tol: float = 1e-4,
               name: str = "grad-check", zero_floor: float = 1e-6) -> GradCheckResult:
    """Check backward gradients of ``builder``'s loss against central differences.

    ``builder(graph)`` must build a scalar-loss graph over ``store``'s
    parameters, deterministically for fixed parameter values.  Every entry of
    every trainable parameter and lookup table in the store is perturbed by
    +-eps and the numeric slope is compared to the accumulated gradient.

    Entries where both gradients fall below ``zero_floor`` are skipped (the
    difference quotient is pure noise there).  Non-differentiable points
    (relu at exactly 0, hard-tanh at +-1, pooling ties) are the builder's
    responsibility to avoid; central differences straddling a kink measure
    the wrong slope.
    """
    g = Graph(seed=0)
    loss_id = builder(g)
    l0 = g.forward(recompute=True).item()
    l1 = g.forward(recompute=True).item()
    if l0 != l1:
        raise GraphError("non-deterministic builder: two identical forwards disagree")
    if g.nodes[loss_id].shape != (1, 1):
        raise GraphError("builder must return a scalar loss node")
    g.backward(loss_id)

    analytic_p: dict[str, np.ndarray] = {}
    analytic_l: dict[str, np.ndarray] = {}
    for node in g.nodes:
        if node.kind == "parameter-ref":
            _, pname = node.extra
            analytic_p[pname] = analytic_p.get(pname, 0.0) + node.grad
        elif node.kind == "lookup-ref":
            _, tname, row = node.extra
            acc = analytic_l.setdefault(tname, np.zeros_like(store.lookups[tname].vectors))
            acc[row] += node.grad[0]

    def slope(mat, i, j):
        orig = mat[i, j]
        mat[i, j] = orig + eps
        lp = g.forward(recompute=True).data[0, 0]
        mat[i, j] = orig - eps
        lm = g.forward(recompute=True).data[0, 0]
        mat[i, j] = orig
        return (lp - lm) / (2.0 * eps)

    max_err, worst = 0.0, ""
    n_checked = n_skipped = 0

    def check_matrix(label, mat, ana):
        nonlocal max_err, worst, n_checked, n_skipped
        rows, cols = mat.shape
        for i in range(rows):
            for j in range(cols):
                num = slope(mat, i, j)
                a = 0.0 if ana is None else float(ana[i, j])
                err = _rel_err(a, num, zero_floor)
                if err is None:
                    n_skipped += 1
                    continue
                n_checked += 1
                if err > max_err:
                    max_err = err
                    worst = f"{label}[{i},{j}] analytic {a:.6g} vs numeric {num:.6g}"

    for pname, mat in store.params.items():
        if not store.is_trainable(pname):
            continue
        check_matrix(pname, mat, analytic_p.get(pname))
    for tname, table in store.lookups.items():
        if not table.trainable:
            continue
        check_matrix(tname, table.vectors, analytic_l.get(tname))

    # restore clean values for any later use of the graph
    g.forward(recompute=True)
    return GradCheckResult(name, max_err, n_checked, n_skipped, tol, worst)
