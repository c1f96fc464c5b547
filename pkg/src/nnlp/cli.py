"""Command-line entry point: gradient checking plus desk-scale training demos.

Commands: ``gradcheck``, ``train-tagger``, ``train-lm``, ``train-classifier``,
``train-embeddings``.  Every run is fully determined by its flags and --seed;
metrics files are tab-separated ``epoch  split  metric  value`` rows.  Model
files store tensors only; vocabularies are rebuilt deterministically from the
training corpus.

Exit codes: 0 success, 1 data or numeric failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import checks
from .autograd import Graph, GraphError
from .data import (CorpusError, Vocab, build_vocab, extract_windows, read_corpus,
                   read_labeled, read_tagged)
from .encoders import ConvSpec, MLPSpec, alloc_conv, alloc_mlp, conv_pool, mlp_apply
from .model import ModelFormatError, ParamStore
from .objectives import LOG_FLOOR, combine_losses, ranking_loss
from .optim import OptimizerConfig, train
from .recurrent import RNNSpec, alloc_rnn, bi_rnn, unroll
from .structured import (ChainSpec, StructuredLossSpec, alloc_chain_scorer, alloc_memm,
                         memm_greedy, memm_loss, part_values, score_parts,
                         structured_loss, viterbi, window_node)
from .tensor import ShapeError
from .treenn import RecNNSpec, alloc_recnn, recnn_encode


class Metrics:
    """Collected (epoch, split, metric, value) rows, written tab-separated."""

    def __init__(self):
        self.rows: list[tuple[int, str, str, float]] = []

    def add(self, epoch: int, split: str, metric: str, value: float) -> None:
        self.rows.append((epoch, split, metric, float(value)))

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for epoch, split, metric, value in self.rows:
                f.write(f"{epoch}\t{split}\t{metric}\t{value:.17g}\n")


def _optimizer_config(args) -> OptimizerConfig:
    return OptimizerConfig(
        lr=args.lr,
        schedule="bottou" if args.lr_lambda > 0 else "constant",
        lr_lambda=args.lr_lambda,
        clip_threshold=args.clip if args.clip > 0 else None,
        l2=args.l2,
        minibatch=args.minibatch,
        epochs=args.epochs,
        seed=args.seed,
    )


def _ce(g: Graph, scores, target: int):
    return g.negate(g.log(g.pick(g.softmax(scores), target), floor=LOG_FLOOR))


def _sum(g: Graph, nodes):
    return nodes[0] if len(nodes) == 1 else g.sum_nodes(nodes)


# -- tagger -------------------------------------------------------------------

@dataclass
class TaggerModel:
    spec: ChainSpec
    vocab: Vocab
    tags: list[str]
    mode: str
    dropout: float = 0.0


def tagger_setup(train_sents, args) -> tuple[ParamStore, TaggerModel]:
    vocab = build_vocab([[w for w, _ in sent] for sent in train_sents])
    tags = sorted({t for sent in train_sents for _, t in sent})
    spec = ChainSpec(len(tags), args.dim, window=args.window, hidden=args.hidden)
    store = ParamStore(seed=args.seed)
    store.add_lookup("words", vocab.n_words, args.dim)
    if args.mode == "mlp":
        alloc_mlp(store, spec.mlp(), "tagger.mlp")
    elif args.mode == "memm":
        alloc_memm(store, spec, "tagger")
    elif args.mode == "crf":
        alloc_chain_scorer(store, spec, "tagger")
    return store, TaggerModel(spec, vocab, tags, args.mode, args.dropout)


def tagger_loss(g: Graph, store: ParamStore, model: TaggerModel,
                word_ids: list[int], gold: list[int], train_mode: bool) -> int:
    spec = model.spec
    if model.mode == "mlp":
        losses = []
        for i, t in enumerate(gold):
            x = window_node(g, store, spec, "words", word_ids, i)
            if model.dropout > 0:
                x = g.dropout(x, model.dropout, train_mode)
            row = mlp_apply(g, store, spec.mlp(), "tagger.mlp", x)
            losses.append(_ce(g, row, t))
        return _sum(g, losses)
    if model.mode == "memm":
        return memm_loss(g, store, spec, "tagger", "words", word_ids, gold)
    parts = score_parts(g, store, spec, "tagger", "words", word_ids)
    return structured_loss(g, StructuredLossSpec("crf"), parts, gold)


def tagger_predict(store: ParamStore, model: TaggerModel, word_ids: list[int]) -> list[int]:
    g = Graph()
    spec = model.spec
    if model.mode == "mlp":
        labels = []
        for i in range(len(word_ids)):
            x = window_node(g, store, spec, "words", word_ids, i)
            row = mlp_apply(g, store, spec.mlp(), "tagger.mlp", x)
            labels.append(int(np.argmax(g.value(row)[0])))
        return labels
    if model.mode == "memm":
        return memm_greedy(g, store, spec, "tagger", "words", word_ids)
    parts = score_parts(g, store, spec, "tagger", "words", word_ids)
    em, tr = part_values(g, parts)
    labels, _ = viterbi(em, tr)
    return labels


def tagger_accuracy(store, model, data) -> float:
    correct = total = 0
    for word_ids, gold in data:
        pred = tagger_predict(store, model, word_ids)
        correct += sum(p == t for p, t in zip(pred, gold))
        total += len(gold)
    return correct / total


def tagger_dev_loss(store, model, data) -> float:
    total = tokens = 0.0
    for word_ids, gold in data:
        g = Graph()
        loss = tagger_loss(g, store, model, word_ids, gold, train_mode=False)
        g.forward()
        total += float(g.nodes[loss].value[0, 0])
        tokens += len(gold)
    return total / tokens


def _tagger_encode(model: TaggerModel, sents):
    tag_index = {t: i for i, t in enumerate(model.tags)}
    out = []
    for sent in sents:
        words = [w for w, _ in sent]
        tags = [t for _, t in sent]
        unknown = [t for t in tags if t not in tag_index]
        if unknown:
            raise CorpusError(f"unknown tag {unknown[0]!r} (not in training set)")
        out.append((model.vocab.encode(words), [tag_index[t] for t in tags]))
    return out


def cmd_train_tagger(args) -> int:
    train_sents = read_tagged(args.train)
    store, model = tagger_setup(train_sents, args)
    dataset = _tagger_encode(model, train_sents)
    dev = _tagger_encode(model, read_tagged(args.dev)) if args.dev else None
    metrics = Metrics()
    config = _optimizer_config(args)

    def builder(g, example):
        word_ids, gold = example
        return tagger_loss(g, store, model, word_ids, gold, train_mode=True)

    dev_eval = (lambda: tagger_dev_loss(store, model, dev)) if dev else None
    report = train(store, dataset, builder, config, dev_eval=dev_eval)
    for epoch, loss in enumerate(report.epoch_losses):
        metrics.add(epoch, "train", "loss", loss)
        metrics.add(epoch, "train", "lr", report.epoch_lrs[epoch])
    train_acc = tagger_accuracy(store, model, dataset)
    metrics.add(report.epochs_run - 1, "train", "accuracy", train_acc)
    print(f"train accuracy {train_acc:.4f}")
    if dev:
        for epoch, loss in enumerate(report.dev_metrics):
            metrics.add(epoch, "dev", "loss", loss)
        dev_acc = tagger_accuracy(store, model, dev)
        metrics.add(report.epochs_run - 1, "dev", "accuracy", dev_acc)
        print(f"dev accuracy {dev_acc:.4f}")
    if args.model_out:
        store.save(args.model_out)
    if args.metrics:
        metrics.write(args.metrics)
    return 0


# -- language model -----------------------------------------------------------

@dataclass
class LMModel:
    vocab: Vocab
    spec: RNNSpec
    n_out: int           # predicted classes: words plus *UNK*
    dropout: float = 0.0


def lm_setup(train_sents, args) -> tuple[ParamStore, LMModel]:
    vocab = build_vocab(train_sents)
    spec = RNNSpec(args.variant, args.dim, args.hidden)
    n_out = vocab.n_words + 1
    store = ParamStore(seed=args.seed)
    store.add_lookup("words", vocab.n_words, args.dim)
    alloc_rnn(store, spec, "lm.rnn")
    y_dim = 2 * args.hidden if args.variant == "scrn" else args.hidden
    store.add_param("lm.out.W", y_dim, n_out)
    store.add_param("lm.out.b", 1, n_out)
    return store, LMModel(vocab, spec, n_out, args.dropout)


def lm_sentence_loss(g: Graph, store: ParamStore, model: LMModel,
                     token_ids: list[int], train_mode: bool) -> int:
    """Sum of next-token negative log-likelihoods (transducer over the sentence)."""
    inputs = [model.vocab.pad_index] + token_ids[:-1]
    xs = [g.lookup(store, "words", i) for i in inputs]
    ys = unroll(g, store, model.spec, "lm.rnn", xs, "transducer")
    w = g.param(store, "lm.out.W")
    b = g.param(store, "lm.out.b")
    losses = []
    for y, target in zip(ys, token_ids):
        if model.dropout > 0:
            y = g.dropout(y, model.dropout, train_mode)
        losses.append(_ce(g, g.affine(y, w, b), target))
    return _sum(g, losses)


def lm_eval(store: ParamStore, model: LMModel, sents_ids) -> tuple[float, float]:
    """(mean per-token negative log-likelihood, perplexity) on a corpus."""
    total = tokens = 0.0
    for ids in sents_ids:
        g = Graph()
        loss = lm_sentence_loss(g, store, model, ids, train_mode=False)
        g.forward()
        total += float(g.nodes[loss].value[0, 0])
        tokens += len(ids)
    nll = total / tokens
    return nll, float(np.exp(nll))


def _lm_encode(model: LMModel, sents):
    # tokens outside the output range (only *PAD*) cannot be predicted
    return [[min(i, model.vocab.unk_index) for i in model.vocab.encode(s)] for s in sents]


def cmd_train_lm(args) -> int:
    train_sents = read_corpus(args.train)
    store, model = lm_setup(train_sents, args)
    dataset = _lm_encode(model, train_sents)
    dev = _lm_encode(model, read_corpus(args.dev)) if args.dev else None
    metrics = Metrics()
    config = _optimizer_config(args)

    def builder(g, ids):
        return lm_sentence_loss(g, store, model, ids, train_mode=True)

    dev_eval = (lambda: lm_eval(store, model, dev)[0]) if dev else None
    report = train(store, dataset, builder, config, dev_eval=dev_eval)
    for epoch, loss in enumerate(report.epoch_losses):
        metrics.add(epoch, "train", "loss", loss)
    train_nll, train_ppl = lm_eval(store, model, dataset)
    metrics.add(report.epochs_run - 1, "train", "perplexity", train_ppl)
    print(f"train perplexity {train_ppl:.3f}")
    if dev:
        for epoch, nll in enumerate(report.dev_metrics):
            metrics.add(epoch, "dev", "nll", nll)
        dev_nll, dev_ppl = lm_eval(store, model, dev)
        metrics.add(report.epochs_run - 1, "dev", "perplexity", dev_ppl)
        print(f"dev perplexity {dev_ppl:.3f}")
    if args.model_out:
        store.save(args.model_out)
    if args.metrics:
        metrics.write(args.metrics)
    return 0


# -- classifier ---------------------------------------------------------------

@dataclass
class ClassifierModel:
    encoder: str
    vocab: Vocab
    classes: list[str]
    enc_dim: int
    conv_spec: ConvSpec | None = None
    rnn_spec: RNNSpec | None = None
    rec_spec: RecNNSpec | None = None
    rec_handle: object = None
    hidden: int = 0
    dropout: float = 0.0
    multi_task: bool = False
    length_median: float = 0.0


def classifier_setup(examples, args) -> tuple[ParamStore, ClassifierModel]:
    is_tree = args.encoder == "recnn"
    classes = sorted({label for label, _ in examples})
    if is_tree:
        token_seqs = [ex.tokens for _, ex in examples]
    else:
        token_seqs = [toks for _, toks in examples]
    vocab = build_vocab(token_seqs)
    store = ParamStore(seed=args.seed)
    store.add_lookup("words", vocab.n_words, args.dim)
    n_classes = len(classes)
    model = ClassifierModel(args.encoder, vocab, classes, 0, hidden=args.hidden,
                            dropout=args.dropout, multi_task=args.multi_task)
    model.length_median = float(np.median([len(s) for s in token_seqs]))

    if args.encoder == "cbow":
        model.enc_dim = args.dim
        alloc_mlp(store, MLPSpec((args.dim, args.hidden, n_classes)), "cls.head")
    elif args.encoder == "conv":
        model.conv_spec = ConvSpec(args.window, args.hidden, pooling="max")
        alloc_conv(store, model.conv_spec, "cls.conv", args.dim)
        model.enc_dim = args.hidden
        alloc_mlp(store, MLPSpec((args.hidden, n_classes)), "cls.head")
    elif args.encoder == "rnn-acceptor":
        variant = args.variant if args.variant in ("srnn", "lstm", "gru", "scrn") else "lstm"
        model.rnn_spec = RNNSpec(variant, args.dim, args.hidden)
        alloc_rnn(store, model.rnn_spec, "cls.rnn")
        model.enc_dim = 2 * args.hidden if variant == "scrn" else args.hidden
        alloc_mlp(store, MLPSpec((model.enc_dim, n_classes)), "cls.head")
    elif args.encoder == "bi-rnn":
        variant = args.variant if args.variant in ("srnn", "lstm", "gru", "scrn") else "lstm"
        model.rnn_spec = RNNSpec(variant, args.dim, args.hidden)
        alloc_rnn(store, model.rnn_spec, "cls.fwd")
        alloc_rnn(store, model.rnn_spec, "cls.bwd")
        per_dir = 2 * args.hidden if variant == "scrn" else args.hidden
        model.enc_dim = 2 * per_dir
        alloc_mlp(store, MLPSpec((model.enc_dim, n_classes)), "cls.head")
    elif args.encoder == "recnn":
        comp = args.variant if args.variant in ("untied", "labels", "per-pair") else "untied"
        model.rec_spec = RecNNSpec(comp, args.dim)
        nt_labels = sorted({r.parent for _, tr in examples for r in tr.rules})
        pairs = sorted({(r.left, r.right) for _, tr in examples for r in tr.rules
                        if not r.is_leaf})
        model.rec_handle = alloc_recnn(store, model.rec_spec, "cls.rec", nt_labels, pairs)
        model.enc_dim = args.dim
        alloc_mlp(store, MLPSpec((args.dim, args.hidden, n_classes)), "cls.head")
    else:
        raise CorpusError(f"unknown encoder {args.encoder!r}")
    if args.multi_task:
        alloc_mlp(store, MLPSpec((model.enc_dim, 2)), "cls.aux")
    return store, model


def classifier_encode_input(g: Graph, store: ParamStore, model: ClassifierModel, body):
    """The sentence (or tree) representation consumed by the output head(s)."""
    if model.encoder == "recnn":
        tree = body
        word_ids = model.vocab.encode(tree.tokens)
        states = recnn_encode(g, store, model.rec_spec, model.rec_handle, tree,
                              "words", word_ids)
        return states[tree.root.key]
    ids = model.vocab.encode(body)
    xs = [g.lookup(store, "words", i) for i in ids]
    if model.encoder == "cbow":
        return xs[0] if len(xs) == 1 else g.avg_nodes(xs)
    if model.encoder == "conv":
        pad = g.lookup(store, "words", model.vocab.pad_index)
        return conv_pool(g, store, model.conv_spec, "cls.conv", xs, pad_node=pad)
    if model.encoder == "rnn-acceptor":
        return unroll(g, store, model.rnn_spec, "cls.rnn", xs, "acceptor")
    if model.encoder == "bi-rnn":
        ys = bi_rnn(g, store, model.rnn_spec, model.rnn_spec, "cls.fwd", "cls.bwd", xs)
        return ys[0] if len(ys) == 1 else g.max_pool_rows(g.concat(ys, axis=0))
    raise GraphError(f"unknown encoder {model.encoder!r}")


def _head_spec(model: ClassifierModel) -> MLPSpec:
    n = len(model.classes)
    if model.encoder in ("cbow", "recnn"):
        return MLPSpec((model.enc_dim, model.hidden, n))
    return MLPSpec((model.enc_dim, n))


def classifier_loss(g: Graph, store: ParamStore, model: ClassifierModel,
                    example, train_mode: bool) -> int:
    label, body = example
    if label not in model.classes:
        raise CorpusError(f"unknown label {label!r} (not in training set)")
    enc = classifier_encode_input(g, store, model, body)
    if model.dropout > 0:
        enc = g.dropout(enc, model.dropout, train_mode)
    scores = mlp_apply(g, store, _head_spec(model), "cls.head", enc)
    target = model.classes.index(label)
    loss = _ce(g, scores, target)
    if model.multi_task:
        length = len(body.tokens) if model.encoder == "recnn" else len(body)
        aux_target = int(length > model.length_median)
        aux_scores = mlp_apply(g, store, MLPSpec((model.enc_dim, 2)), "cls.aux", enc)
        loss = combine_losses(g, [loss, _ce(g, aux_scores, aux_target)])
    return loss


def classifier_predict(store: ParamStore, model: ClassifierModel, body) -> str:
    g = Graph()
    enc = classifier_encode_input(g, store, model, body)
    scores = mlp_apply(g, store, _head_spec(model), "cls.head", enc)
    return model.classes[int(np.argmax(g.value(scores)[0]))]


def classifier_accuracy(store, model, examples) -> float:
    hits = sum(classifier_predict(store, model, body) == label
               for label, body in examples)
    return hits / len(examples)


def classifier_dev_loss(store, model, examples) -> float:
    total = 0.0
    for ex in examples:
        g = Graph()
        loss = classifier_loss(g, store, model, ex, train_mode=False)
        g.forward()
        total += float(g.nodes[loss].value[0, 0])
    return total / len(examples)


def cmd_train_classifier(args) -> int:
    is_tree = args.encoder == "recnn"
    examples = read_labeled(args.train, tree=is_tree)
    store, model = classifier_setup(examples, args)
    dev = read_labeled(args.dev, tree=is_tree) if args.dev else None
    metrics = Metrics()
    config = _optimizer_config(args)

    def builder(g, ex):
        return classifier_loss(g, store, model, ex, train_mode=True)

    dev_eval = (lambda: classifier_dev_loss(store, model, dev)) if dev else None
    report = train(store, dataset=examples, builder=builder, config=config,
                   dev_eval=dev_eval)
    for epoch, loss in enumerate(report.epoch_losses):
        metrics.add(epoch, "train", "loss", loss)
    train_acc = classifier_accuracy(store, model, examples)
    metrics.add(report.epochs_run - 1, "train", "accuracy", train_acc)
    print(f"train accuracy {train_acc:.4f}")
    if dev:
        for epoch, loss in enumerate(report.dev_metrics):
            metrics.add(epoch, "dev", "loss", loss)
        dev_acc = classifier_accuracy(store, model, dev)
        metrics.add(report.epochs_run - 1, "dev", "accuracy", dev_acc)
        print(f"dev accuracy {dev_acc:.4f}")
    if args.model_out:
        store.save(args.model_out)
    if args.metrics:
        metrics.write(args.metrics)
    return 0


# -- embeddings ---------------------------------------------------------------

@dataclass
class EmbeddingModel:
    vocab: Vocab
    word_types: list[str]        # untagged corpus words, corruption pool
    window: int
    positional: bool
    dim: int
    hidden: int


def embeddings_setup(sents, args) -> tuple[ParamStore, EmbeddingModel]:
    samples = [s for sent in sents for s in extract_windows(sent, args.window,
                                                            args.positional)]
    token_lists = [[s.focus_token, *s.context] for s in samples]
    vocab = build_vocab(token_lists)
    word_types = sorted({tok for sent in sents for tok in sent})
    if len(word_types) < 2:
        raise CorpusError("embedding training needs at least two word types")
    store = ParamStore(seed=args.seed)
    store.add_lookup("words", vocab.n_words, args.dim)
    d_in = (2 * args.window + 1) * args.dim
    alloc_mlp(store, MLPSpec((d_in, args.hidden, 1)), "emb.score")
    return store, EmbeddingModel(vocab, word_types, args.window, args.positional,
                                 args.dim, args.hidden)


def _window_score(g, store, model, focus_tok, context_toks):
    k = model.window
    order = list(context_toks[:k]) + [focus_tok] + list(context_toks[k:])
    xs = [g.lookup(store, "words", model.vocab.index(t)) for t in order]
    x = g.concat(xs, axis=1) if len(xs) > 1 else xs[0]
    spec = MLPSpec(((2 * k + 1) * model.dim, model.hidden, 1))
    return mlp_apply(g, store, spec, "emb.score", x)


def embedding_pair_loss(g: Graph, store: ParamStore, model: EmbeddingModel,
                        sample, rng) -> int:
    """Margin ranking loss: observed window above its focus-corrupted twin."""
    while True:
        fake = model.word_types[int(rng.integers(len(model.word_types)))]
        if fake != sample.focus_token:
            break
    s_true = _window_score(g, store, model, sample.focus_token, sample.context)
    s_fake = _window_score(g, store, model, fake, sample.context)
    return ranking_loss(g, "margin", s_true, s_fake)


def embeddings_dev_loss(store, model, samples, seed: int = 9) -> float:
    rng = np.random.default_rng(seed)
    total = 0.0
    for sample in samples:
        g = Graph()
        loss = embedding_pair_loss(g, store, model, sample, rng)
        g.forward()
        total += float(g.nodes[loss].value[0, 0])
    return total / len(samples)


def nearest_neighbors(store: ParamStore, model: EmbeddingModel, query: str,
                      topn: int = 8) -> list[tuple[str, float]]:
    table = store.lookups["words"]
    qvec = table.row(model.vocab.index(query))
    out = []
    for tok in model.word_types:
        if tok == query:
            continue
        v = table.row(model.vocab.index(tok))
        denom = float(np.linalg.norm(qvec) * np.linalg.norm(v))
        out.append((tok, float(qvec @ v / denom) if denom > 0 else 0.0))
    out.sort(key=lambda item: (-item[1], item[0]))
    return out[:topn]


def cmd_train_embeddings(args) -> int:
    sents = read_corpus(args.train)
    store, model = embeddings_setup(sents, args)
    dataset = [s for sent in sents for s in extract_windows(sent, args.window,
                                                            args.positional)]
    dev_samples = None
    if args.dev:
        dev_samples = [s for sent in read_corpus(args.dev)
                       for s in extract_windows(sent, args.window, args.positional)]
    metrics = Metrics()
    config = _optimizer_config(args)

    def builder(g, sample):
        return embedding_pair_loss(g, store, model, sample, g.rng)

    dev_eval = (lambda: embeddings_dev_loss(store, model, dev_samples)) if dev_samples else None
    report = train(store, dataset, builder, config, dev_eval=dev_eval)
    for epoch, loss in enumerate(report.epoch_losses):
        metrics.add(epoch, "train", "loss", loss)
    if dev_samples:
        for epoch, loss in enumerate(report.dev_metrics):
            metrics.add(epoch, "dev", "loss", loss)
    if args.model_out:
        store.save(args.model_out)
    if args.metrics:
        metrics.write(args.metrics)
    if args.query:
        for tok, cos in nearest_neighbors(store, model, args.query):
            print(f"{tok}\t{cos:.6f}")
    return 0


# -- gradcheck ----------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    t0 = time.time()
    results = checks.run_scope(args.scope, eps=args.eps, tol=args.tol, log=sys.stdout)
    failures = [r for r in results if not r.passed]
    print(f"{len(results) - len(failures)}/{len(results)} checks passed "
          f"in {time.time() - t0:.1f}s")
    if failures:
        print("failing cases: " + ", ".join(r.name for r in failures))
        return 1
    return 0


# -- argument parsing ----------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser, lr: float, epochs: int,
                     dim: int, hidden: int, window: int) -> None:
    p.add_argument("--train", required=True, help="training corpus path")
    p.add_argument("--dev", default=None, help="held-out corpus path")
    p.add_argument("--model-out", default=None, help="write the trained model here")
    p.add_argument("--metrics", default=None, help="write tab-separated metrics here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--lr-lambda", type=float, default=0.0,
                   help="enable the decaying schedule lr/(1+lr*lambda*t)")
    p.add_argument("--clip", type=float, default=0.0, help="gradient norm threshold (0 = off)")
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--minibatch", type=int, default=1)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--dim", type=int, default=dim, help="embedding dimension")
    p.add_argument("--hidden", type=int, default=hidden)
    p.add_argument("--window", type=int, default=window)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnlp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference checks over all architectures")
    p.add_argument("--scope", default="all",
                   choices=("ops", "encoders", "recurrent", "treenn", "structured", "all"))
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("train-tagger", help="window tagger on token<TAB>tag sentences")
    _add_train_flags(p, lr=0.1, epochs=5, dim=16, hidden=32, window=1)
    p.add_argument("--mode", default="mlp", choices=("mlp", "memm", "crf"),
                   help="greedy window MLP, greedy MEMM, or CRF with Viterbi decoding")
    p.set_defaults(fn=cmd_train_tagger)

    p = sub.add_parser("train-lm", help="recurrent language model on a plain corpus")
    _add_train_flags(p, lr=0.1, epochs=5, dim=16, hidden=32, window=1)
    p.add_argument("--variant", default="lstm", choices=("srnn", "lstm", "gru", "scrn"))
    p.set_defaults(fn=cmd_train_lm)

    p = sub.add_parser("train-classifier", help="sentence classifier on label<TAB>sentence lines")
    _add_train_flags(p, lr=0.1, epochs=10, dim=16, hidden=16, window=2)
    p.add_argument("--encoder", default="cbow",
                   choices=("cbow", "conv", "rnn-acceptor", "bi-rnn", "recnn"))
    p.add_argument("--variant", default=None,
                   help="rnn variant (srnn|lstm|gru|scrn) or recnn composition "
                        "(untied|labels|per-pair)")
    p.add_argument("--multi-task", action="store_true",
                   help="add a second output head (sentence-length task), losses summed")
    p.set_defaults(fn=cmd_train_classifier)

    p = sub.add_parser("train-embeddings",
                       help="margin-ranking word embeddings from windows")
    _add_train_flags(p, lr=0.1, epochs=3, dim=16, hidden=16, window=2)
    p.add_argument("--positional", action="store_true",
                   help="tag context tokens with their offset, e.g. 'the:+2'")
    p.add_argument("--query", default=None, help="print nearest neighbors of this word")
    p.set_defaults(fn=cmd_train_embeddings)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CorpusError, GraphError, ModelFormatError, ShapeError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:  # console-script hook
    sys.exit(main())


if __name__ == "__main__":
    entry()
