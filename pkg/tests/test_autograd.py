import numpy as np
import pytest

from nnlp.autograd import Graph, GraphError, grad_check, op_names, register_op
from nnlp.model import ParamStore, constant
from nnlp.tensor import ShapeError

CATALOGUE = {
    "constant-input", "parameter-ref", "lookup-ref", "add", "cmul", "matmul",
    "concat", "affine", "negate", "scalar-add", "sigmoid", "tanh", "hardtanh",
    "relu", "cube", "tanhcube", "exp", "log", "softmax", "pick", "sum-elems",
    "sum-nodes", "avg-nodes", "max-pool-rows", "avg-pool-rows", "kmax-pool-rows",
    "dropout", "normalize-tanh", "minus",
}


def test_op_catalogue_complete():
    assert set(op_names()) == CATALOGUE


def test_register_requires_both_rules():
    with pytest.raises(ValueError, match="together"):
        register_op("half-op", lambda g, s, e: s[0], lambda g, n, x: x[0], None)


def _ab_store(a=2.0, b=3.0):
    store = ParamStore()
    store.add_param("a", 1, 1, constant(a))
    store.add_param("b", 1, 1, constant(b))
    return store


def _ab_graph(store):
    g = Graph()
    a = g.param(store, "a")
    b = g.param(store, "b")
    ab = g.cmul(a, b)
    loss = g.cmul(g.scalar_add(ab, 1.0), g.scalar_add(ab, 2.0))
    return g, a, b, loss


def test_forward_shared_subexpression():
    g, _, _, _ = _ab_graph(_ab_store())
    assert g.forward().item() == 56.0


def test_backward_shared_subexpression():
    store = _ab_store()
    g, a, b, loss = _ab_graph(store)
    g.forward()
    g.backward(loss)
    assert g.nodes[a].grad[0, 0] == 45.0
    assert g.nodes[b].grad[0, 0] == 30.0


def test_backward_seed_is_one():
    store = _ab_store()
    g, _, _, loss = _ab_graph(store)
    g.forward()
    g.backward(loss)
    assert g.nodes[loss].grad[0, 0] == 1.0
    assert g.loss == loss


def test_softmax_symmetry_and_pick_log():
    g = Graph()
    x = g.constant([[1.0, 1.0, 1.0, 1.0]])
    sm = g.softmax(x)
    loss = g.negate(g.log(g.pick(sm, 2)))
    g.forward()
    assert np.allclose(g.nodes[sm].value, 0.25)
    assert g.nodes[loss].value[0, 0] == pytest.approx(1.3862944, abs=1e-6)


def test_softmax_distribution_invariant():
    rng = np.random.default_rng(5)
    g = Graph()
    outs = [g.softmax(g.constant(rng.normal(scale=50, size=(1, 7)))) for _ in range(20)]
    g.forward()
    for nid in outs:
        v = g.nodes[nid].value
        assert abs(v.sum() - 1.0) < 1e-12
        assert (v > 0).all()


def test_loss_must_be_scalar():
    g = Graph()
    g.constant([[1.0, 2.0]])
    g.forward()
    with pytest.raises(GraphError, match="1x1"):
        g.backward(0)


def test_backward_before_forward():
    g = Graph()
    g.constant([[1.0]])
    with pytest.raises(GraphError, match="before forward"):
        g.backward(0)


def test_gradient_of_sum_is_ones():
    g = Graph()
    c = g.constant([[1.0, 2.0], [3.0, 4.0]])
    loss = g.sum_elems(c)
    g.forward()
    g.backward(loss)
    assert np.array_equal(g.nodes[c].grad, np.ones((2, 2)))


def test_accumulation_matches_duplicated_node():
    """A node with two consumers collects the sum of both contributions."""
    store = ParamStore()
    store.add_param("x", 1, 3)
    store.params["x"][:] = [[0.3, -0.7, 1.2]]

    g1 = Graph()
    x = g1.param(store, "x")
    shared = g1.tanh(x)
    loss1 = g1.sum_elems(g1.add(g1.cmul(shared, shared), g1.exp(shared)))
    g1.forward()
    g1.backward(loss1)

    g2 = Graph()
    x2 = g2.param(store, "x")
    t1 = g2.tanh(x2)
    t2 = g2.tanh(x2)  # duplicated subgraph, same math
    loss2 = g2.sum_elems(g2.add(g2.cmul(t1, t1), g2.exp(t2)))
    g2.forward()
    g2.backward(loss2)

    assert np.allclose(g1.nodes[x].grad, g2.nodes[x2].grad, rtol=0, atol=1e-15)
    assert g1.nodes[x].grad.shape == (1, 3)


def test_minus_identical_inputs():
    store = ParamStore()
    store.add_param("p", 1, 2, constant(1.5))
    store.add_param("q", 1, 2, constant(1.5))
    g = Graph()
    p, q = g.param(store, "p"), g.param(store, "q")
    d = g.minus(p, q)
    loss = g.sum_elems(d)
    g.forward()
    assert np.array_equal(g.nodes[d].value, np.zeros((1, 2)))
    g.backward(loss)
    assert np.array_equal(g.nodes[p].grad, -g.nodes[q].grad)


def test_shape_errors_name_kind():
    g = Graph()
    a = g.constant([[1.0, 2.0]])
    b = g.constant([[1.0, 2.0, 3.0]])
    with pytest.raises(ShapeError, match="add"):
        g.add(a, b)
    with pytest.raises(ShapeError, match="matmul"):
        g.matmul(a, b)
    with pytest.raises(GraphError, match="unknown op kind"):
        g.add_node("no-such-op", [])


def test_pick_out_of_range():
    g = Graph()
    x = g.constant(np.zeros((1, 17)))
    nid = g.pick(x, 5)
    assert g.nodes[nid].shape == (1, 1)
    with pytest.raises(ShapeError):
        g.pick(x, 17)


def test_log_of_nonpositive_is_error():
    g = Graph()
    g.log(g.constant([[0.0]]))
    with pytest.raises(GraphError, match="non-positive"):
        g.forward()


def test_forward_deterministic_with_dropout():
    store = ParamStore()
    store.add_param("x", 2, 8)
    g = Graph(seed=123)
    d = g.dropout(g.param(store, "x"), 0.5, train=True)
    first = g.forward(recompute=True).data.copy()
    second = g.forward(recompute=True).data
    assert np.array_equal(first, second)
    # same seed, same construction order: identical masks across graphs
    g2 = Graph(seed=123)
    g2.dropout(g2.param(store, "x"), 0.5, train=True)
    assert np.array_equal(g2.forward().data, first)
    assert g.nodes[d].extra[2] is not None


def test_dropout_eval_mode_is_identity():
    g = Graph()
    x = g.constant([[1.0, -2.0, 3.0]])
    d = g.dropout(x, 0.9, train=False)
    g.forward()
    assert np.array_equal(g.nodes[d].value, [[1.0, -2.0, 3.0]])


def test_dropout_inverted_scaling():
    g = Graph(seed=0)
    x = g.constant(np.ones((1, 1000)))
    d = g.dropout(x, 0.5, train=True)
    g.forward()
    v = g.nodes[d].value
    kept = v[v != 0]
    assert np.allclose(kept, 2.0)  # 1/(1-0.5) scaling


def test_grad_check_linear_graph_is_analytic():
    store = ParamStore(seed=2)
    store.add_param("w", 3, 2)
    x = np.array([[0.5, -1.0, 2.0]])

    def builder(g):
        return g.sum_elems(g.matmul(g.constant(x), g.param(store, "w")))

    res = grad_check(store, builder, name="linear")
    assert res.passed and res.max_rel_err < 1e-9
    # analytic gradient of sum(xW) w.r.t. W is x broadcast over columns
    g = Graph()
    loss = builder(g)
    g.forward()
    g.backward(loss)
    w_node = g.param(store, "w")
    assert np.allclose(g.nodes[w_node].grad, np.repeat(x.T, 2, axis=1), atol=1e-15)


def test_grad_check_mlp1():
    store = ParamStore(seed=4)
    store.add_param("W1", 4, 5)
    store.add_param("b1", 1, 5)
    store.add_param("W2", 5, 3)
    store.add_param("b2", 1, 3)
    x = np.random.default_rng(0).uniform(-2, 2, (1, 4))

    def builder(g):
        h = g.tanh(g.affine(g.constant(x), g.param(store, "W1"), g.param(store, "b1")))
        out = g.affine(h, g.param(store, "W2"), g.param(store, "b2"))
        return g.negate(g.log(g.pick(g.softmax(out), 1)))

    res = grad_check(store, builder, eps=1e-5, tol=1e-4, name="mlp1")
    assert res.passed


def test_grad_check_rejects_nondeterministic_builder():
    class DriftingDict(dict):
        """Parameter values change on every read, as an unseeded source would."""

        def __getitem__(self, key):
            mat = super().__getitem__(key)
            mat += 0.001
            return mat

    store = ParamStore()
    store.add_param("x", 1, 1, constant(1.0))
    store.params = DriftingDict(store.params)

    def builder(g):
        return g.sum_elems(g.param(store, "x"))

    with pytest.raises(GraphError, match="non-deterministic"):
        grad_check(store, builder)


def test_grad_check_skips_negligible_entries():
    store = ParamStore()
    store.add_param("used", 1, 1, constant(0.7))
    store.add_param("unused", 1, 2, constant(0.1))

    def builder(g):
        return g.tanh(g.param(store, "used"))

    res = grad_check(store, builder)
    assert res.passed
    assert res.n_skipped == 2  # the unused parameter contributes nothing


def test_relu_and_hardtanh_flat_points():
    g = Graph()
    x = g.constant([[0.0, -1.0, 1.0, 2.0]])
    r = g.relu(x)
    h = g.add_node("hardtanh", [x])
    loss = g.sum_elems(g.add(r, h))
    g.forward()
    g.backward(loss)
    gx = g.nodes[x].grad[0]
    # relu'(0) = 0 and hardtanh'(+-1) = 0 by definition
    assert gx[0] == 0.0 + 1.0   # relu 0, hardtanh interior 1
    assert gx[1] == 0.0 + 0.0
    assert gx[2] == 1.0 + 0.0
    assert gx[3] == 1.0 + 0.0


def test_normalize_tanh_unit_norm():
    g = Graph()
    x = g.constant([[3.0, -1.0, 0.5]])
    n = g.normalize_tanh(x)
    g.forward()
    assert np.linalg.norm(g.nodes[n].value) == pytest.approx(1.0, abs=1e-12)


def test_incremental_forward_extends_graph():
    g = Graph()
    a = g.constant([[2.0]])
    b = g.cmul(a, a)
    assert g.forward().item() == 4.0
    c = g.scalar_add(b, 1.0)
    assert g.forward().item() == 5.0  # only the new node is evaluated
    assert g.value(c)[0, 0] == 5.0


def test_kmax_shape_and_order():
    g = Graph()
    x = g.constant([[1, 2, 3], [9, 6, 5], [2, 3, 1], [7, 8, 1], [3, 4, 1]])
    k2 = g.kmax_pool_rows(x, 2)
    g.forward()
    assert np.array_equal(g.nodes[k2].value, [[9, 6, 3, 7, 8, 5]])
    with pytest.raises(ShapeError):
        g.kmax_pool_rows(x, 6)


def test_second_backward_on_extended_graph_has_no_stale_grads():
    store = ParamStore()
    store.add_param("x", 1, 2, constant(0.5))
    g = Graph()
    x = g.param(store, "x")
    first = g.sum_elems(g.tanh(x))
    g.forward()
    g.backward(first)
    second = g.sum_elems(g.cmul(x, x))
    g.forward()
    g.backward(second)
    # gradient of sum(x*x) alone is 2x; nothing left over from the first pass
    assert np.allclose(g.nodes[x].grad, 2.0 * store.params["x"], atol=1e-15)


def test_max_pool_tie_routes_to_lowest_row():
    g = Graph()
    x = g.constant([[2.0, 1.0], [2.0, 3.0], [2.0, 3.0]])
    loss = g.sum_elems(g.max_pool_rows(x))
    g.forward()
    g.backward(loss)
    assert np.array_equal(g.nodes[x].grad, [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
