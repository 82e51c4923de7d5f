"""Minimal float64 tensor engine with a reverse-mode gradient tape."""
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    backward,
    format_tensor,
    parameter,
    parse_tensor,
    record,
    zero_grad,
)
from .ops import (
    NumericError,
    ShapeError,
    add,
    affine,
    as_tensor,
    concat,
    cross_entropy,
    expand,
    gather_rows,
    l2norm,
    layer_norm,
    log_softmax,
    matmul,
    max,
    mean,
    mul,
    relu,
    reshape,
    softmax,
    sub,
    sum,
    sum_mid,
    take,
    zeros,
)

__all__ = [
    "NumericError", "ShapeError", "Tape", "Tensor", "active_tape", "add", "affine",
    "as_tensor", "backward", "concat", "cross_entropy", "expand", "format_tensor",
    "gather_rows", "l2norm", "layer_norm", "log_softmax", "matmul", "max", "mean", "mul", "parameter",
    "parse_tensor", "record", "relu", "reshape", "softmax", "sub", "sum", "sum_mid", "take",
    "zero_grad", "zeros",
]
