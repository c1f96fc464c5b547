"""nnlp: a small define-by-run neural network toolkit for NLP."""

from .autograd import GradCheckResult, Graph, GraphError, NodeId, grad_check, op_names
from .model import (HE, IDENTITY, PAD, UNK, WORD2VEC, XAVIER, InitSpec, LookupTable,
                    ModelFormatError, ParamStore, constant)
from .tensor import ShapeError, Tensor

__all__ = [
    "GradCheckResult", "Graph", "GraphError", "NodeId", "grad_check", "op_names",
    "HE", "IDENTITY", "PAD", "UNK", "WORD2VEC", "XAVIER", "InitSpec", "LookupTable",
    "ModelFormatError", "ParamStore", "constant",
    "ShapeError", "Tensor",
]
