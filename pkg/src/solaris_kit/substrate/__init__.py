"""Tensor core: float32 arrays, gradient tape, retention stats, RNG."""

from .gradcheck import finite_diff_check
from .rng import Rng
from .tensor import (
    Node,
    Tape,
    TapeStats,
    Tensor,
    active_tape,
    add,
    backward,
    checkpoint,
    concat,
    gelu,
    layer_norm,
    matmul,
    mul,
    neg,
    no_tape,
    param,
    reduce_mean,
    reduce_sum,
    reshape,
    slice_axis,
    softmax,
    stop_grad,
    sub,
    tape,
    tape_probe,
    tensor,
    transpose,
    zero_grads,
)

__all__ = [
    "Node",
    "Rng",
    "Tape",
    "TapeStats",
    "Tensor",
    "active_tape",
    "add",
    "backward",
    "checkpoint",
    "concat",
    "finite_diff_check",
    "gelu",
    "layer_norm",
    "matmul",
    "mul",
    "neg",
    "no_tape",
    "param",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "slice_axis",
    "softmax",
    "stop_grad",
    "sub",
    "tape",
    "tape_probe",
    "tensor",
    "transpose",
    "zero_grads",
]
