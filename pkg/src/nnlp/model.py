"""Persistent parameters, embedding tables, initialization, serialization.

A ParamStore outlives the per-example graphs: graphs reference its tensors
through parameter-ref / lookup-ref nodes and the optimizer writes updates
back into it.  Model files are plain text (see ``save``) and round-trip
float64 values exactly via 17-significant-digit decimals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError

MAGIC = "NNLP1"

UNK = "*UNK*"
PAD = "*PAD*"


class ModelFormatError(ValueError):
    """Malformed or wrong-version model file."""


@dataclass(frozen=True)
class InitSpec:
    """How to fill a fresh tensor.

    kinds: ``xavier`` (uniform with bound sqrt(6)/sqrt(d_in+d_out)),
    ``he`` (gaussian with std sqrt(2/d_in)), ``word2vec`` (uniform in
    [-1/(2d), 1/(2d)] with d the column count), ``constant``, ``identity``.
    """

    kind: str
    value: float = 0.0

    def materialize(self, rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "xavier":
            bound = np.sqrt(6.0) / np.sqrt(rows + cols)
            return rng.uniform(-bound, bound, size=(rows, cols))
        if self.kind == "he":
            return rng.normal(0.0, np.sqrt(2.0 / rows), size=(rows, cols))
        if self.kind == "word2vec":
            bound = 1.0 / (2.0 * cols)
            return rng.uniform(-bound, bound, size=(rows, cols))
        if self.kind == "constant":
            return np.full((rows, cols), float(self.value))
        if self.kind == "identity":
            if rows != cols:
                raise ShapeError(f"identity init needs a square shape, got ({rows},{cols})")
            return np.eye(rows)
        raise ValueError(f"unknown init kind {self.kind!r}")


XAVIER = InitSpec("xavier")
HE = InitSpec("he")
WORD2VEC = InitSpec("word2vec")
ZEROS = InitSpec("constant", 0.0)
IDENTITY = InitSpec("identity")


def constant(value: float) -> InitSpec:
    return InitSpec("constant", value)


class LookupTable:
    """An embedding matrix with two reserved rows appended: *UNK* then *PAD*.

    Any out-of-range index resolves to the *UNK* row, so lookups never fail.
    """

    def __init__(self, name: str, vocab_size: int, dim: int, vectors: np.ndarray,
                 trainable: bool = True):
        self.name = name
        self.vocab_size = vocab_size          # without the reserved rows
        self.dim = dim
        self.vectors = vectors                # (vocab_size + 2) x dim
        self.trainable = trainable

    @property
    def rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def unk_index(self) -> int:
        return self.vocab_size

    @property
    def pad_index(self) -> int:
        return self.vocab_size + 1

    def resolve(self, index: int) -> int:
        if 0 <= index < self.rows:
            return int(index)
        return self.unk_index

    def row(self, index: int) -> np.ndarray:
        return self.vectors[self.resolve(index)]


class ParamStore:
    """Named parameters and lookup tables shared across graphs."""

    def __init__(self, seed: int = 0, l2: float = 0.0):
        self.params: dict[str, np.ndarray] = {}
        self.lookups: dict[str, LookupTable] = {}
        self.seed = seed
        self.l2 = l2
        self.rng = np.random.default_rng(seed)
        self._frozen: set[str] = set()

    def _check_name(self, name: str) -> None:
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"bad parameter name {name!r}")
        if name in self.params or name in self.lookups:
            raise ValueError(f"duplicate parameter name {name!r}")

    def add_param(self, name: str, rows: int, cols: int,
                  init: InitSpec | None = None, trainable: bool = True) -> np.ndarray:
        """Create and initialize a parameter.

        Default init: xavier for matrices, zeros for 1 x d vectors (biases).
        """
        self._check_name(name)
        if init is None:
            init = XAVIER if rows > 1 else ZEROS
        mat = init.materialize(rows, cols, self.rng)
        self.params[name] = mat
        if not trainable:
            self._frozen.add(name)
        return mat

    def add_lookup(self, name: str, vocab_size: int, dim: int,
                   init: InitSpec | None = None, trainable: bool = True) -> LookupTable:
        """Create an embedding table; *UNK* is initialized like a normal word,
        *PAD* starts at zero (near-neutral under averaging)."""
        self._check_name(name)
        if init is None:
            init = WORD2VEC
        vecs = np.empty((vocab_size + 2, dim))
        vecs[:vocab_size + 1] = init.materialize(vocab_size + 1, dim, self.rng)
        vecs[vocab_size + 1] = 0.0
        table = LookupTable(name, vocab_size, dim, vecs, trainable)
        self.lookups[name] = table
        return table

    def set_trainable(self, name: str, trainable: bool) -> None:
        if name in self.lookups:
            self.lookups[name].trainable = trainable
            return
        if name not in self.params:
            raise KeyError(name)
        if trainable:
            self._frozen.discard(name)
        else:
            self._frozen.add(name)

    def is_trainable(self, name: str) -> bool:
        return name not in self._frozen

    # serialization

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(MAGIC + "\n")
            for name, mat in self.params.items():
                f.write(f"P {name} {mat.shape[0]} {mat.shape[1]}\n")
                _write_rows(f, mat)
            for name, tab in self.lookups.items():
                f.write(f"L {name} {tab.rows} {tab.dim} {tab.unk_index} {tab.pad_index}\n")
                _write_rows(f, tab.vectors)

    @staticmethod
    def load(path: str) -> "ParamStore":
        store = ParamStore()
        with open(path, encoding="utf-8") as f:
            first = f.readline().rstrip("\n")
            if first != MAGIC:
                raise ModelFormatError(f"not a {MAGIC} model file (got header {first!r})")
            lineno = 1
            while True:
                header = f.readline()
                if not header:
                    break
                lineno += 1
                fields = header.split()
                try:
                    if fields[0] == "P":
                        _, name, rows, cols = fields
                        mat = _read_rows(f, int(rows), int(cols), lineno)
                        lineno += int(rows)
                        if name in store.params or name in store.lookups:
                            raise ModelFormatError(f"duplicate name {name!r}")
                        store.params[name] = mat
                    elif fields[0] == "L":
                        _, name, rows, cols, unk, pad = fields
                        rows, cols = int(rows), int(cols)
                        if int(unk) != rows - 2 or int(pad) != rows - 1:
                            raise ModelFormatError(f"bad reserved indices for table {name!r}")
                        mat = _read_rows(f, rows, cols, lineno)
                        lineno += rows
                        if name in store.params or name in store.lookups:
                            raise ModelFormatError(f"duplicate name {name!r}")
                        store.lookups[name] = LookupTable(name, rows - 2, cols, mat)
                    else:
                        raise ModelFormatError(f"line {lineno}: bad section header {header!r}")
                except (ValueError, IndexError) as e:
                    if isinstance(e, ModelFormatError):
                        raise
                    raise ModelFormatError(f"line {lineno}: {e}") from e
        return store


def _write_rows(f, mat: np.ndarray) -> None:
    for row in mat:
        f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def _read_rows(f, rows: int, cols: int, lineno: int) -> np.ndarray:
    mat = np.empty((rows, cols))
    for i in range(rows):
        line = f.readline()
        if not line:
            raise ModelFormatError(f"line {lineno + i + 1}: unexpected end of file")
        vals = line.split()
        if len(vals) != cols:
            raise ModelFormatError(f"line {lineno + i + 1}: expected {cols} values, got {len(vals)}")
        mat[i] = [float(v) for v in vals]
    return mat
