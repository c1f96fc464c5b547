"""Named finite-difference checks covering every op and architecture.

Each case builds a tiny model with bounded random values, a scalar-loss
graph, and runs ``grad_check`` over every parameter entry.  Cases whose loss
has non-differentiable points (relu or hard-tanh kinks, pooling ties) search
for a seed that keeps all inputs a safe distance from those points; the
check itself is then exact.
"""

from __future__ import annotations

import numpy as np

from . import encoders, recurrent, structured, treenn
from .autograd import GradCheckResult, Graph, grad_check
from .model import ParamStore
from .objectives import LOG_FLOOR

SCOPES = ("ops", "encoders", "recurrent", "treenn", "structured")

KINK_MARGIN = 1e-3


def _kink_margin(g: Graph) -> float:
    """Smallest distance of any evaluated input to a non-differentiable point."""
    margin = float("inf")
    for node in g.nodes:
        if node.value is None:
            continue
        x = g.nodes[node.inputs[0]].value if node.inputs else None
        if node.kind == "relu":
            margin = min(margin, float(np.abs(x).min()))
        elif node.kind == "hardtanh":
            margin = min(margin, float(np.abs(np.abs(x) - 1.0).min()))
        elif node.kind in ("max-pool-rows", "kmax-pool-rows"):
            if x.shape[0] < 2:
                continue
            k = node.extra if node.kind == "kmax-pool-rows" else 1
            srt = np.sort(x, axis=0)[::-1]
            if k < x.shape[0]:
                margin = min(margin, float((srt[k - 1] - srt[k]).min()))
    return margin


def _fill(store: ParamStore, rng, scale: float = 1.0) -> None:
    """Overwrite every tensor with bounded uniform values."""
    for mat in store.params.values():
        mat[:] = rng.uniform(-scale, scale, mat.shape)
    for table in store.lookups.values():
        table.vectors[:] = rng.uniform(-scale, scale, table.vectors.shape)


def _ce_head(g: Graph, store: ParamStore, x, target: int = 0):
    """Affine + softmax + negative log pick: a smooth, non-trivial loss head."""
    out = g.affine(x, g.param(store, "head.W"), g.param(store, "head.b"))
    return g.negate(g.log(g.pick(g.softmax(out), target), floor=LOG_FLOOR))


def _alloc_head(store: ParamStore, d_in: int, n_classes: int = 3) -> None:
    store.add_param("head.W", d_in, n_classes)
    store.add_param("head.b", 1, n_classes)


def _run_case(name: str, alloc, build, eps: float, tol: float,
              needs_seed_search: bool = False) -> GradCheckResult:
    last = None
    for seed in range(60):
        store = ParamStore(seed=seed)
        rng = np.random.default_rng(9973 * seed + 17)
        alloc(store, rng)
        if not needs_seed_search:
            break
        probe = Graph(seed=0)
        build(probe, store)
        probe.forward()
        if _kink_margin(probe) > KINK_MARGIN:
            break
        last = seed
    else:  # pragma: no cover - seed search is expected to succeed quickly
        raise RuntimeError(f"{name}: no kink-safe seed found (last tried {last})")
    return grad_check(store, lambda g: build(g, store), eps=eps, tol=tol, name=name)


# -- ops scope ----------------------------------------------------------------

def _op_cases():
    cases = []

    def case(name, alloc, build, kinky=False):
        cases.append((name, alloc, build, kinky))

    def p(store, rng, name, rows, cols, scale=1.0):
        store.add_param(name, rows, cols)
        store.params[name][:] = rng.uniform(-scale, scale, (rows, cols))

    def two(store, rng):
        p(store, rng, "x", 2, 3)
        p(store, rng, "y", 2, 3)

    case("op-constant-input", lambda s, r: p(s, r, "x", 1, 4),
         lambda g, s: g.sum_elems(g.tanh(g.cmul(g.param(s, "x"),
                                                g.constant([[0.5, -1.0, 2.0, 0.25]])))))
    case("op-parameter-ref", lambda s, r: p(s, r, "x", 2, 2),
         lambda g, s: g.sum_elems(g.tanh(g.param(s, "x"))))

    def alloc_lookup(s, r):
        s.add_lookup("E", 4, 3)
        s.lookups["E"].vectors[:] = r.uniform(-1, 1, (6, 3))

    case("op-lookup-ref", alloc_lookup,
         lambda g, s: g.sum_elems(g.tanh(g.concat([g.lookup(s, "E", 0),
                                                   g.lookup(s, "E", 2),
                                                   g.lookup(s, "E", 99)], axis=0))))
    case("op-add", two,
         lambda g, s: g.sum_elems(g.tanh(g.add(g.param(s, "x"), g.param(s, "y")))))
    case("op-minus", two,
         lambda g, s: g.sum_elems(g.tanh(g.minus(g.param(s, "x"), g.param(s, "y")))))
    case("op-cmul", two,
         lambda g, s: g.sum_elems(g.tanh(g.cmul(g.param(s, "x"), g.param(s, "y")))))

    def alloc_mm(s, r):
        p(s, r, "x", 2, 3)
        p(s, r, "w", 3, 2)

    case("op-matmul", alloc_mm,
         lambda g, s: g.sum_elems(g.tanh(g.matmul(g.param(s, "x"), g.param(s, "w")))))
    case("op-concat", two,
         lambda g, s: g.sum_elems(g.tanh(g.concat(
             [g.concat([g.param(s, "x"), g.param(s, "y")], axis=1),
              g.concat([g.param(s, "y"), g.param(s, "x")], axis=1)], axis=0))))

    def alloc_affine(s, r):
        p(s, r, "x", 2, 3)
        p(s, r, "w", 3, 4)
        p(s, r, "b", 1, 4)

    case("op-affine", alloc_affine,
         lambda g, s: g.sum_elems(g.tanh(g.affine(g.param(s, "x"), g.param(s, "w"),
                                                  g.param(s, "b")))))
    case("op-negate", lambda s, r: p(s, r, "x", 2, 3),
         lambda g, s: g.sum_elems(g.tanh(g.negate(g.param(s, "x")))))
    case("op-scalar-add", lambda s, r: p(s, r, "x", 2, 3),
         lambda g, s: g.sum_elems(g.tanh(g.scalar_add(g.param(s, "x"), 0.75))))

    for act in ("sigmoid", "tanh", "hardtanh", "relu", "cube", "tanhcube"):
        kinky = act in ("hardtanh", "relu")
        case(f"op-{act}", lambda s, r: p(s, r, "x", 2, 3, 1.8),
             (lambda a: lambda g, s: g.sum_elems(g.tanh(g.activation(a, g.param(s, "x")))))(act),
             kinky)

    case("op-exp", lambda s, r: p(s, r, "x", 2, 3),
         lambda g, s: g.sum_elems(g.tanh(g.exp(g.param(s, "x")))))
    case("op-log", lambda s, r: p(s, r, "x", 2, 3),
         lambda g, s: g.sum_elems(g.log(g.scalar_add(
             g.cmul(g.param(s, "x"), g.param(s, "x")), 0.5))))

    def alloc_vec(s, r):
        p(s, r, "x", 1, 5)

    case("op-softmax", alloc_vec,
         lambda g, s: g.negate(g.log(g.pick(g.softmax(g.param(s, "x")), 2), floor=LOG_FLOOR)))
    case("op-pick", lambda s, r: p(s, r, "x", 3, 4),
         lambda g, s: g.tanh(g.pick(g.param(s, "x"), 2, row=1)))
    case("op-sum-elems", lambda s, r: p(s, r, "x", 2, 3),
         lambda g, s: g.tanh(g.sum_elems(g.param(s, "x"))))
    case("op-sum-nodes", two,
         lambda g, s: g.sum_elems(g.tanh(g.sum_nodes(
             [g.param(s, "x"), g.param(s, "y"), g.param(s, "x")]))))
    case("op-avg-nodes", two,
         lambda g, s: g.sum_elems(g.tanh(g.avg_nodes([g.param(s, "x"), g.param(s, "y")]))))
    case("op-max-pool-rows", lambda s, r: p(s, r, "x", 4, 3),
         lambda g, s: g.sum_elems(g.tanh(g.max_pool_rows(g.param(s, "x")))), True)
    case("op-avg-pool-rows", lambda s, r: p(s, r, "x", 4, 3),
         lambda g, s: g.sum_elems(g.tanh(g.avg_pool_rows(g.param(s, "x")))))
    case("op-kmax-pool-rows", lambda s, r: p(s, r, "x", 5, 3),
         lambda g, s: g.sum_elems(g.tanh(g.kmax_pool_rows(g.param(s, "x"), 2))), True)
    case("op-dropout", lambda s, r: p(s, r, "x", 2, 6),
         lambda g, s: g.sum_elems(g.tanh(g.dropout(g.param(s, "x"), 0.5, train=True))))
    case("op-dropout-eval", lambda s, r: p(s, r, "x", 2, 6),
         lambda g, s: g.sum_elems(g.tanh(g.dropout(g.param(s, "x"), 0.5, train=False))))
    case("op-normalize-tanh", lambda s, r: p(s, r, "x", 1, 5),
         lambda g, s: g.sum_elems(g.cmul(g.normalize_tanh(g.param(s, "x")),
                                         g.constant([[1.0, -0.5, 2.0, 0.25, -1.5]]))))
    return cases


# -- encoders scope ------------------------------------------------------------

def _encoder_cases():
    cases = []
    acts = ("sigmoid", "tanh", "hardtanh", "relu", "cube", "tanhcube")

    def word_nodes(g, s, count=6):
        return [g.lookup(s, "E", i) for i in range(count)]

    for act in acts:
        spec = encoders.MLPSpec((4, 5, 3), act)

        def alloc(s, r, spec=spec):
            s.add_param("x", 1, 4)
            encoders.alloc_mlp(s, spec, "mlp")
            _fill(s, r)

        def build(g, s, spec=spec):
            out = encoders.mlp_apply(g, s, spec, "mlp", g.param(s, "x"))
            return g.negate(g.log(g.pick(g.softmax(out), 1), floor=LOG_FLOOR))

        cases.append((f"mlp1-{act}", alloc, build, act in ("relu", "hardtanh")))

    for act in acts:
        spec = encoders.MLPSpec((4, 5, 4, 3), act)

        def alloc(s, r, spec=spec):
            s.add_param("x", 1, 4)
            encoders.alloc_mlp(s, spec, "mlp")
            _fill(s, r, 0.8)

        def build(g, s, spec=spec):
            out = encoders.mlp_apply(g, s, spec, "mlp", g.param(s, "x"))
            return g.negate(g.log(g.pick(g.softmax(out), 2), floor=LOG_FLOOR))

        cases.append((f"mlp2-{act}", alloc, build, act in ("relu", "hardtanh")))

    def alloc_perceptron(s, r):
        s.add_param("x", 1, 4)
        encoders.alloc_mlp(s, encoders.MLPSpec((4, 3)), "mlp")
        _fill(s, r)

    cases.append(("perceptron", alloc_perceptron,
                  lambda g, s: g.negate(g.log(g.pick(g.softmax(
                      encoders.mlp_apply(g, s, encoders.MLPSpec((4, 3)), "mlp",
                                         g.param(s, "x"))), 0), floor=LOG_FLOOR)),
                  False))

    def alloc_emb(s, r):
        s.add_lookup("E", 8, 3)
        _alloc_head(s, 3)
        _fill(s, r)

    def feats(idx_weights):
        return [encoders.FeatureSpec("E", i, w) for i, w in idx_weights]

    cases.append(("encode-cbow", alloc_emb,
                  lambda g, s: _ce_head(g, s, encoders.encode_cbow(
                      g, s, feats([(0, 1.0), (3, 1.0), (5, 1.0)]))), False))
    cases.append(("encode-wcbow", alloc_emb,
                  lambda g, s: _ce_head(g, s, encoders.encode_cbow(
                      g, s, feats([(0, 1.0), (3, 2.5), (5, 0.5)]), weighted=True)), False))

    def alloc_concat(s, r):
        s.add_lookup("E", 8, 3)
        _alloc_head(s, 9)
        _fill(s, r)

    cases.append(("encode-concat", alloc_concat,
                  lambda g, s: _ce_head(g, s, encoders.encode_concat(
                      g, s, feats([(1, 1.0), (2, 1.0), (4, 1.0)]))), False))

    conv_settings = [
        ("conv-narrow-max", encoders.ConvSpec(2, 3, pooling="max"), 3),
        ("conv-wide-max", encoders.ConvSpec(3, 3, mode="wide", pooling="max"), 3),
        ("conv-avg", encoders.ConvSpec(2, 3, pooling="avg"), 3),
        ("conv-kmax", encoders.ConvSpec(2, 3, pooling=("kmax", 2)), 6),
        ("conv-split", encoders.ConvSpec(2, 3, pooling=("split", 2, "max")), 6),
        ("conv-hier", encoders.ConvSpec(2, 3, pooling=("hier", ((2, 2),))), 3),
    ]
    for cname, cspec, d_pool in conv_settings:
        def alloc(s, r, cspec=cspec, d_pool=d_pool):
            s.add_lookup("E", 8, 2)
            encoders.alloc_conv(s, cspec, "conv", 2)
            _alloc_head(s, d_pool)
            _fill(s, r)

        def build(g, s, cspec=cspec):
            words = word_nodes(g, s)
            pad = g.lookup(s, "E", s.lookups["E"].pad_index)
            pooled = encoders.conv_pool(g, s, cspec, "conv", words, pad_node=pad)
            return _ce_head(g, s, pooled)

        cases.append((cname, alloc, build, True))
    return cases


# -- recurrent scope ------------------------------------------------------------

def _recurrent_cases():
    cases = []
    variants = [
        ("srnn", recurrent.RNNSpec("srnn", 3, 4), 4),
        ("lstm", recurrent.RNNSpec("lstm", 3, 4), 4),
        ("gru", recurrent.RNNSpec("gru", 3, 4), 4),
        ("scrn", recurrent.RNNSpec("scrn", 3, 4), 8),
    ]

    def emb_nodes(g, s, ids):
        return [g.lookup(s, "E", i) for i in ids]

    for vname, spec, d_out in variants:
        def alloc(s, r, spec=spec, d_out=d_out):
            s.add_lookup("E", 5, 3)
            recurrent.alloc_rnn(s, spec, "rnn")
            _alloc_head(s, d_out)
            _fill(s, r, 0.9)

        def build(g, s, spec=spec):
            y = recurrent.unroll(g, s, spec, "rnn", emb_nodes(g, s, [0, 1, 2]), "acceptor")
            return _ce_head(g, s, y)

        cases.append((f"rnn-{vname}-unroll3", alloc, build, False))

    bi_f = recurrent.RNNSpec("srnn", 3, 4)
    bi_b = recurrent.RNNSpec("lstm", 3, 3)

    def alloc_bi(s, r):
        s.add_lookup("E", 5, 3)
        recurrent.alloc_rnn(s, bi_f, "fwd")
        recurrent.alloc_rnn(s, bi_b, "bwd")
        _alloc_head(s, 7)
        _fill(s, r, 0.9)

    def build_bi(g, s):
        ys = recurrent.bi_rnn(g, s, bi_f, bi_b, "fwd", "bwd", emb_nodes(g, s, [0, 1, 2, 3]))
        return _ce_head(g, s, ys[1])

    cases.append(("bi-rnn", alloc_bi, build_bi, False))

    deep_specs = [recurrent.RNNSpec("lstm", 3, 4), recurrent.RNNSpec("gru", 4, 3)]

    def alloc_deep(s, r):
        s.add_lookup("E", 5, 3)
        recurrent.alloc_rnn(s, deep_specs[0], "l0")
        recurrent.alloc_rnn(s, deep_specs[1], "l1")
        _alloc_head(s, 3)
        _fill(s, r, 0.9)

    def build_deep(g, s):
        ys = recurrent.deep_rnn(g, s, deep_specs, ["l0", "l1"], emb_nodes(g, s, [0, 1, 2]))
        return _ce_head(g, s, ys[-1])

    cases.append(("deep-rnn-2layer", alloc_deep, build_deep, False))

    stack_spec = recurrent.RNNSpec("lstm", 3, 4)

    def alloc_stack(s, r):
        s.add_lookup("E", 6, 3)
        recurrent.alloc_rnn(s, stack_spec, "stk")
        _alloc_head(s, 4)
        _fill(s, r, 0.9)

    def build_stack(g, s):
        # push a; push b; push c; pop; push d; pop; pop; push e; push f
        a, b, c, d, e, f = (g.lookup(s, "E", i) for i in range(6))
        st = recurrent.stack_rnn_empty(g, s, stack_spec, "stk")
        st = recurrent.stack_push(g, s, stack_spec, "stk", st, a)
        st = recurrent.stack_push(g, s, stack_spec, "stk", st, b)
        st = recurrent.stack_push(g, s, stack_spec, "stk", st, c)
        st = recurrent.stack_pop(st)
        st = recurrent.stack_push(g, s, stack_spec, "stk", st, d)
        st = recurrent.stack_pop(st)
        st = recurrent.stack_pop(st)
        st = recurrent.stack_push(g, s, stack_spec, "stk", st, e)
        st = recurrent.stack_push(g, s, stack_spec, "stk", st, f)
        return _ce_head(g, s, st.output(g))

    cases.append(("stack-rnn-fig8", alloc_stack, build_stack, False))

    enc_spec = recurrent.RNNSpec("gru", 3, 4)
    dec_spec = recurrent.RNNSpec("lstm", 3, 4)

    def alloc_ed(s, r):
        s.add_lookup("E", 5, 3)
        recurrent.alloc_encoder_decoder(s, enc_spec, dec_spec, "enc", "dec")
        _alloc_head(s, 4)
        _fill(s, r, 0.9)

    def build_ed(g, s):
        xs = emb_nodes(g, s, [0, 1, 2])
        teacher = emb_nodes(g, s, [3, 4])
        ys = recurrent.encoder_decoder(g, s, enc_spec, dec_spec, "enc", "dec",
                                       xs, teacher, reverse_input=True)
        return g.sum_nodes([_ce_head(g, s, y, target=i % 3) for i, y in enumerate(ys)])

    cases.append(("encoder-decoder", alloc_ed, build_ed, False))
    return cases


# -- treenn scope ----------------------------------------------------------------

_TREE = "(S (NP (Det the) (Noun boy)) (VP (Verb saw) (NP (Det her) (Noun duck))))"


def _treenn_cases():
    cases = []
    labels = ["S", "NP", "VP", "Det", "Noun", "Verb"]
    pairs = [("Det", "Noun"), ("Verb", "NP")]
    for comp in ("untied", "labels", "per-pair"):
        spec = treenn.RecNNSpec(comp, 3, d_nt=2)
        handle = treenn.recnn_handle(spec, "rec", labels, pairs)

        def alloc(s, r, spec=spec):
            s.add_lookup("words", 6, 3)
            treenn.alloc_recnn(s, spec, "rec", labels, pairs)
            _alloc_head(s, 3)
            _fill(s, r, 0.9)

        def build(g, s, spec=spec, handle=handle):
            tree = treenn.parse_sexp(_TREE)
            states = treenn.recnn_encode(g, s, spec, handle, tree, "words",
                                         [0, 1, 2, 3, 4])
            return _ce_head(g, s, states[tree.root.key])

        cases.append((f"recnn-{comp}", alloc, build, False))
    return cases


# -- structured scope --------------------------------------------------------------

def _structured_cases():
    cases = []
    spec = structured.ChainSpec(n_labels=3, d_emb=2, window=1, hidden=4)

    def alloc(s, r):
        s.add_lookup("E", 6, 2)
        structured.alloc_chain_scorer(s, spec, "chain")
        _fill(s, r, 0.9)

    def build_crf(g, s):
        parts = structured.score_parts(g, s, spec, "chain", "E", [0, 1, 2, 3])
        return structured.structured_loss(
            g, structured.StructuredLossSpec("crf"), parts, [0, 2, 1, 0])

    cases.append(("structured-crf", alloc, build_crf, False))

    def alloc_memm(s, r):
        s.add_lookup("E", 6, 2)
        structured.alloc_memm(s, spec, "memm")
        _fill(s, r, 0.9)

    def build_memm(g, s):
        return structured.memm_loss(g, s, spec, "memm", "E", [0, 1, 2], [1, 0, 2])

    cases.append(("structured-memm", alloc_memm, build_memm, False))
    return cases


def cases_for_scope(scope: str):
    if scope == "ops":
        return _op_cases()
    if scope == "encoders":
        return _encoder_cases()
    if scope == "recurrent":
        return _recurrent_cases()
    if scope == "treenn":
        return _treenn_cases()
    if scope == "structured":
        return _structured_cases()
    if scope == "all":
        out = []
        for s in SCOPES:
            out.extend(cases_for_scope(s))
        return out
    raise ValueError(f"unknown scope {scope!r}")


def run_scope(scope: str, eps: float = 1e-5, tol: float = 1e-4,
              log=None) -> list[GradCheckResult]:
    """Run every case in a scope, logging one line per case."""
    results = []
    for name, alloc, build, kinky in cases_for_scope(scope):
        result = _run_case(name, alloc, build, eps, tol, needs_seed_search=kinky)
        results.append(result)
        if log is not None:
            print(result, file=log)
    return results
