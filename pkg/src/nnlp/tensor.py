"""Dense 2-D float64 arrays and the elementary operations everything else uses.

All values in the toolkit are rows x cols matrices of 64-bit floats; vectors
are 1 x d row vectors throughout (so a linear layer is ``x @ W``).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform to an operation."""


class Tensor:
    """A rows x cols matrix of float64 with row-major storage."""

    __slots__ = ("data",)

    def __init__(self, data):
        a = np.asarray(data, dtype=np.float64)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        elif a.ndim == 1:
            a = a.reshape(1, -1)
        elif a.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got {a.ndim}-D data")
        self.data = np.ascontiguousarray(a)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def tolist(self):
        return self.data.tolist()

    def __repr__(self):
        return f"Tensor({self.rows}x{self.cols})\n{self.data}"

    @staticmethod
    def zeros(rows: int, cols: int) -> "Tensor":
        return Tensor(np.zeros((rows, cols)))

    @staticmethod
    def ones(rows: int, cols: int) -> "Tensor":
        return Tensor(np.ones((rows, cols)))

    @staticmethod
    def full(rows: int, cols: int, value: float) -> "Tensor":
        return Tensor(np.full((rows, cols), float(value)))

    @staticmethod
    def eye(n: int) -> "Tensor":
        return Tensor(np.eye(n))

    @staticmethod
    def row(values: Sequence[float]) -> "Tensor":
        return Tensor(np.asarray(values, dtype=np.float64).reshape(1, -1))


# scalar functions shared with the graph ops


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def hardtanh(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def cube(x: np.ndarray) -> np.ndarray:
    return x ** 3


def tanhcube(x: np.ndarray) -> np.ndarray:
    return np.tanh(x ** 3 + x)


_UNARY = {
    "neg": np.negative,
    "exp": np.exp,
    "log": np.log,
    "sigmoid": sigmoid,
    "tanh": np.tanh,
    "hardtanh": hardtanh,
    "relu": relu,
    "cube": cube,
    "tanhcube": tanhcube,
}

_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; shapes must conform as (m,k) x (k,n)."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return Tensor(a.data @ b.data)


def ewise(op: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Element-wise application of a named unary or binary scalar function."""
    if b is None:
        fn = _UNARY.get(op)
        if fn is None:
            raise ValueError(f"unknown unary op tag {op!r}")
        return Tensor(fn(a.data))
    fn = _BINARY.get(op)
    if fn is None:
        raise ValueError(f"unknown binary op tag {op!r}")
    if a.shape != b.shape:
        raise ShapeError(f"ewise {op}: shape mismatch {a.shape} vs {b.shape}")
    return Tensor(fn(a.data, b.data))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate row vectors [v1;v2;...] into a single longer row vector."""
    if not parts:
        raise ShapeError("concat_cols of an empty list")
    for p in parts:
        if p.rows != 1:
            raise ShapeError(f"concat_cols needs row vectors, got {p.shape}")
    if len(parts) == 1:
        return parts[0].copy()
    return Tensor(np.concatenate([p.data for p in parts], axis=1))


def reduce(kind: str, a: Tensor):
    """Column-wise reduction to a 1 x cols tensor.

    ``sum`` and ``avg`` return a Tensor; ``max`` returns (Tensor, argmax row
    indices) so a caller can route gradients.  Max ties go to the lowest row.
    """
    if a.rows < 1 or a.data.size == 0:
        raise ShapeError("reduce of an empty tensor")
    if kind == "sum":
        return Tensor(a.data.sum(axis=0, keepdims=True))
    if kind == "avg":
        return Tensor(a.data.mean(axis=0, keepdims=True))
    if kind == "max":
        idx = np.argmax(a.data, axis=0)  # first occurrence wins on ties
        return Tensor(a.data.max(axis=0, keepdims=True)), idx
    raise ValueError(f"unknown reduce kind {kind!r}")
