import numpy as np
import pytest

from nnlp.data import (CorpusError, SkipGramPair, build_vocab, corrupt,
                       extract_windows, read_corpus, read_labeled, read_tagged,
                       read_trees, skipgram_pairs)
from nnlp.model import PAD, UNK


def test_build_vocab_min_count():
    v = build_vocab([["a", "a", "b"]], min_count=2)
    assert len(v) == 1 and "a" in v and "b" not in v
    assert v.index("b") == v.unk_index


def test_build_vocab_keeps_all_at_min_count_one():
    v = build_vocab([["x", "y"], ["z", "x"]], min_count=1)
    assert len(v) == 3
    assert v.index("x") == 0  # highest count first


def test_build_vocab_deterministic():
    corpus = [["b", "a", "c"], ["a", "c"]]
    v1, v2 = build_vocab(corpus), build_vocab(corpus)
    assert all(v1.index(t) == v2.index(t) for t in ("a", "b", "c"))
    # ties broken lexicographically: a and c both occur twice
    assert v1.index("a") < v1.index("c") < v1.index("b")


def test_vocab_roundtrip_and_reserved():
    v = build_vocab([["dog", "cat", "dog"]])
    for tok in ("dog", "cat"):
        assert v.token(v.index(tok)) == tok
    assert v.index(UNK) == v.unk_index
    assert v.index(PAD) == v.pad_index
    assert v.token(v.unk_index) == UNK
    assert v.token(v.pad_index) == PAD
    assert v.index("never-seen") == v.unk_index


def test_build_vocab_empty():
    with pytest.raises(CorpusError, match="empty"):
        build_vocab([])


def test_extract_windows_boundary_pad():
    samples = extract_windows(["the", "dog"], k=1)
    assert len(samples) == 2
    assert samples[0].context == (PAD, "dog")
    assert samples[1].context == ("the", PAD)
    assert samples[0].target == "the"


def test_extract_windows_positional_tags():
    samples = extract_windows(["a", "the", "dog"], k=2, positional=True)
    middle = samples[1]
    assert "a:-1" in middle.context
    assert "dog:+1" in middle.context
    first = samples[0]
    assert "the:+1" in first.context and "dog:+2" in first.context
    assert PAD in first.context  # pads stay untagged


def test_extract_windows_counts_and_targets():
    sent = ["w%d" % i for i in range(9)]
    tags = ["t%d" % i for i in range(9)]
    samples = extract_windows(sent, k=3, targets=tags)
    assert len(samples) == 9
    assert [s.focus for s in samples] == list(range(9))
    assert all(len(s.context) == 6 for s in samples)
    assert samples[4].target == "t4"
    with pytest.raises(CorpusError):
        extract_windows([], 1)
    with pytest.raises(CorpusError):
        extract_windows(["a"], 1, targets=["x", "y"])


def test_skipgram_enumeration():
    pairs = skipgram_pairs(["a", "b", "c"], k=1)
    assert [(p.focus, p.context) for p in pairs] == \
        [("a", "b"), ("b", "a"), ("b", "c"), ("c", "b")]
    assert all(p.observed for p in pairs)


def test_skipgram_single_word():
    assert skipgram_pairs(["only"], k=3) == []


def test_skipgram_matches_bruteforce_static():
    rng = np.random.default_rng(0)
    sent = [f"w{i}" for i in range(8)]
    for k in (1, 2, 3):
        got = {(p.focus, p.context) for p in skipgram_pairs(sent, k)}
        expected = {(sent[i], sent[j]) for i in range(8) for j in range(8)
                    if i != j and abs(i - j) <= k}
        assert got == expected


def test_skipgram_dynamic_reproducible():
    sent = [f"w{i}" for i in range(10)]
    a = skipgram_pairs(sent, 4, dynamic=True, rng=np.random.default_rng(7))
    b = skipgram_pairs(sent, 4, dynamic=True, rng=np.random.default_rng(7))
    assert a == b
    assert all(abs(sent.index(p.focus) - sent.index(p.context)) <= 4 for p in a)
    with pytest.raises(CorpusError, match="rng"):
        skipgram_pairs(sent, 2, dynamic=True)


def test_corrupt_never_equals_original_and_flags():
    v = build_vocab([["a", "b", "c", "d"]])
    rng = np.random.default_rng(1)
    pair = SkipGramPair("a", "b")
    for _ in range(200):
        bad = corrupt(pair, v, rng)
        assert bad.focus != "a"
        assert bad.context == "b"
        assert not bad.observed
    bad_ctx = corrupt(pair, v, rng, which="context")
    assert bad_ctx.context != "b" and bad_ctx.focus == "a"


def test_corrupt_uniform_within_two_percent():
    words = [f"w{i}" for i in range(10)]
    v = build_vocab([words])
    rng = np.random.default_rng(2)
    pair = SkipGramPair(words[0], words[1])
    counts = {w: 0 for w in words}
    draws = 100_000
    for _ in range(draws):
        counts[corrupt(pair, v, rng).focus] += 1
    assert counts[words[0]] == 0
    expected = draws / 9
    for w in words[1:]:
        assert abs(counts[w] - expected) / draws <= 0.02


def test_corrupt_degenerate_vocab():
    v = build_vocab([["only"]])
    with pytest.raises(CorpusError, match="at least 2"):
        corrupt(SkipGramPair("only", "only"), v, np.random.default_rng(0))


def test_read_corpus_and_tagged(tmp_path):
    plain = tmp_path / "c.txt"
    plain.write_text("the dog barks\n\nshort one\n")
    assert read_corpus(str(plain)) == [["the", "dog", "barks"], ["short", "one"]]

    tagged = tmp_path / "t.tsv"
    tagged.write_text("the\tDET\ndog\tNOUN\n\nruns\tVERB\n")
    sents = read_tagged(str(tagged))
    assert sents == [[("the", "DET"), ("dog", "NOUN")], [("runs", "VERB")]]


def test_read_tagged_malformed_names_line(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("the\tDET\noops-no-tab\n")
    with pytest.raises(CorpusError, match=":2"):
        read_tagged(str(bad))


def test_read_trees_delegates_and_reports_line(tmp_path):
    trees = tmp_path / "trees.txt"
    trees.write_text("(A w)\n(S (A a) (B b))\n")
    out = read_trees(str(trees))
    assert [t.n for t in out] == [1, 2]
    bad = tmp_path / "badtrees.txt"
    bad.write_text("(A w)\n(S (A a) (B b) (C c))\n")
    with pytest.raises(CorpusError, match=":2"):
        read_trees(str(bad))


def test_read_labeled(tmp_path):
    f = tmp_path / "cls.tsv"
    f.write_text("pos\tgreat stuff\nneg\tterrible stuff\n")
    got = read_labeled(str(f))
    assert got == [("pos", ["great", "stuff"]), ("neg", ["terrible", "stuff"])]
    t = tmp_path / "cls_tree.tsv"
    t.write_text("pos\t(S (A good) (B one))\n")
    [(label, tree)] = read_labeled(str(t), tree=True)
    assert label == "pos" and tree.tokens == ["good", "one"]
    bad = tmp_path / "bad.tsv"
    bad.write_text("no-tab-here\n")
    with pytest.raises(CorpusError):
        read_labeled(str(bad))


def test_window_positions_are_bijective():
    sent = [f"w{i}" for i in range(17)]
    samples = extract_windows(sent, k=2)
    assert [s.focus for s in samples] == list(range(17))
    assert [s.focus_token for s in samples] == sent


def test_readers_lowercase_opt_in(tmp_path):
    plain = tmp_path / "mixed.txt"
    plain.write_text("The DOG Barks\n")
    assert read_corpus(str(plain)) == [["The", "DOG", "Barks"]]
    assert read_corpus(str(plain), lowercase=True) == [["the", "dog", "barks"]]
    tagged = tmp_path / "mixed.tsv"
    tagged.write_text("The\tDET\nDOG\tNOUN\n")
    sents = read_tagged(str(tagged), lowercase=True)
    assert sents == [[("the", "DET"), ("dog", "NOUN")]]  # tags keep case
