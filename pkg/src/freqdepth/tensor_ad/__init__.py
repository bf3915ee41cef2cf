from .core import (DomainError, ShapeError, Tape, Tensor, add, as_tensor, backward, broadcast_to,
                   concat, div, elementwise, exp, getitem, log, make_op, matmul, mean, mul, neg,
                   parameter, relu, reshape, sigmoid, softmax, sqrt, square, stack, sub, swish,
                   tabs, tanh, transpose, tsum, where)
from .nn import GruParams, conv2d, gru_cell, token_attention
from .optim import Adam, adam_step
from . import checkpoint

__all__ = [
    "DomainError", "ShapeError", "Tape", "Tensor", "add", "as_tensor", "backward", "broadcast_to",
    "concat", "div", "elementwise", "exp", "getitem", "log", "make_op", "matmul", "mean", "mul",
    "neg", "parameter", "relu", "reshape", "sigmoid", "softmax", "sqrt", "square", "stack", "sub",
    "swish", "tabs", "tanh", "transpose", "tsum", "where", "GruParams", "conv2d", "gru_cell",
    "token_attention", "Adam", "adam_step", "checkpoint",
]
