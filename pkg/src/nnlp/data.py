"""Corpus ingestion, vocabularies, window extraction, skip-gram pairs.

Tokenization is whitespace-only; lowercasing is opt-in on the readers.
Frequent-word subsampling is out of scope; dynamic window sizes are the
supported sampling variant.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .model import PAD, UNK
from .treenn import BinaryTree, parse_sexp


class CorpusError(ValueError):
    """Malformed corpus input."""


class Vocab:
    """Dense token -> index map; rare tokens fall back to *UNK*.

    Indices 0..n_words-1 are assigned by descending count, ties broken
    lexicographically; *UNK* and *PAD* sit right after, matching the two
    reserved rows of a LookupTable built with ``vocab_size = n_words``.
    """

    def __init__(self, counts: dict[str, int], min_count: int = 1):
        kept = sorted((tok for tok, c in counts.items() if c >= min_count),
                      key=lambda tok: (-counts[tok], tok))
        self._index = {tok: i for i, tok in enumerate(kept)}
        self._tokens = kept
        self.counts = dict(counts)
        self.min_count = min_count

    @property
    def n_words(self) -> int:
        return len(self._tokens)

    @property
    def unk_index(self) -> int:
        return self.n_words

    @property
    def pad_index(self) -> int:
        return self.n_words + 1

    def index(self, token: str) -> int:
        if token == UNK:
            return self.unk_index
        if token == PAD:
            return self.pad_index
        return self._index.get(token, self.unk_index)

    def token(self, index: int) -> str:
        if 0 <= index < self.n_words:
            return self._tokens[index]
        if index == self.pad_index:
            return PAD
        return UNK

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self) -> int:
        return self.n_words


def build_vocab(corpus: list[list[str]], min_count: int = 1) -> Vocab:
    """Count tokens over a tokenized corpus and build the index."""
    counts = Counter()
    for sentence in corpus:
        counts.update(sentence)
    if not counts:
        raise CorpusError("empty corpus")
    return Vocab(counts, min_count)


@dataclass(frozen=True)
class WindowSample:
    """A 2k-token context around one focus position.

    ``target`` carries the tag (tagging) or the focus word itself (embedding
    training); positional mode tags context tokens with their offset, e.g.
    "the:+2" (boundary *PAD* fills stay untagged so they share one vector).
    """

    focus: int
    focus_token: str
    context: tuple[str, ...]
    target: str


def extract_windows(sentence: list[str], k: int, positional: bool = False,
                    targets: list[str] | None = None) -> list[WindowSample]:
    """One sample per position; boundaries are padded with *PAD*."""
    if not sentence:
        raise CorpusError("empty sentence")
    if k < 1:
        raise CorpusError(f"window size must be >= 1, got {k}")
    if targets is not None and len(targets) != len(sentence):
        raise CorpusError("one target per token required")
    n = len(sentence)
    samples = []
    for i in range(n):
        context = []
        for off in range(-k, k + 1):
            if off == 0:
                continue
            j = i + off
            tok = sentence[j] if 0 <= j < n else PAD
            if positional and tok != PAD:
                tok = f"{tok}:{off:+d}"
            context.append(tok)
        target = targets[i] if targets is not None else sentence[i]
        samples.append(WindowSample(i, sentence[i], tuple(context), target))
    return samples


@dataclass(frozen=True)
class SkipGramPair:
    focus: str
    context: str
    observed: bool = True    # False once corrupted


def skipgram_pairs(sentence: list[str], k: int, dynamic: bool = False,
                   rng: np.random.Generator | None = None) -> list[SkipGramPair]:
    """(focus, context) pairs for every position, truncated at boundaries.

    With ``dynamic`` the effective window for each focus is drawn uniformly
    from 1..k, so nearer contexts are sampled more often across the corpus.
    """
    if k < 1:
        raise CorpusError(f"window size must be >= 1, got {k}")
    if dynamic and rng is None:
        raise CorpusError("dynamic windows need an rng")
    n = len(sentence)
    pairs = []
    for i in range(n):
        width = int(rng.integers(1, k + 1)) if dynamic else k
        for j in range(max(0, i - width), min(n, i + width + 1)):
            if j != i:
                pairs.append(SkipGramPair(sentence[i], sentence[j]))
    return pairs


def corrupt(pair: SkipGramPair, vocab: Vocab, rng: np.random.Generator,
            which: str = "focus") -> SkipGramPair:
    """Replace the focus (or context) with a different uniform-random word."""
    if vocab.n_words < 2:
        raise CorpusError("corruption needs a vocabulary of at least 2 words")
    original = pair.focus if which == "focus" else pair.context
    while True:
        tok = vocab.token(int(rng.integers(vocab.n_words)))
        if tok != original:
            break
    if which == "focus":
        return SkipGramPair(tok, pair.context, observed=False)
    if which == "context":
        return SkipGramPair(pair.focus, tok, observed=False)
    raise CorpusError(f"unknown corruption slot {which!r}")


# readers ---------------------------------------------------------------------

def read_corpus(path: str, lowercase: bool = False) -> list[list[str]]:
    """Plain corpus: one sentence per line, whitespace tokens."""
    sentences = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            tokens = line.lower().split() if lowercase else line.split()
            if tokens:
                sentences.append(tokens)
    if not sentences:
        raise CorpusError(f"{path}: empty corpus")
    return sentences


def read_tagged(path: str, lowercase: bool = False) -> list[list[tuple[str, str]]]:
    """Tagged corpus: token<TAB>tag lines, blank line between sentences.

    ``lowercase`` folds tokens only; tags keep their case.
    """
    sentences: list[list[tuple[str, str]]] = []
    current: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if current:
                    sentences.append(current)
                    current = []
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise CorpusError(f"{path}:{lineno}: expected 'token<TAB>tag', got {line!r}")
            token = fields[0].lower() if lowercase else fields[0]
            current.append((token, fields[1]))
    if current:
        sentences.append(current)
    if not sentences:
        raise CorpusError(f"{path}: empty tagged corpus")
    return sentences


def read_trees(path: str) -> list[BinaryTree]:
    """Tree corpus: one s-expression per line."""
    trees = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                trees.append(parse_sexp(line))
            except ValueError as e:
                raise CorpusError(f"{path}:{lineno}: {e}") from e
    if not trees:
        raise CorpusError(f"{path}: empty tree corpus")
    return trees


def read_labeled(path: str, tree: bool = False):
    """Classifier corpus: label<TAB>sentence (or label<TAB>s-expression)."""
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t", 1)
            if len(fields) != 2 or not fields[0]:
                raise CorpusError(f"{path}:{lineno}: expected 'label<TAB>sentence'")
            label, body = fields
            if tree:
                try:
                    examples.append((label, parse_sexp(body)))
                except ValueError as e:
                    raise CorpusError(f"{path}:{lineno}: {e}") from e
            else:
                tokens = body.split()
                if not tokens:
                    raise CorpusError(f"{path}:{lineno}: empty sentence")
                examples.append((label, tokens))
    if not examples:
        raise CorpusError(f"{path}: empty corpus")
    return examples
