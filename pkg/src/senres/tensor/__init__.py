"""Minimal dense tensors with reverse-mode differentiation and Adam."""

from senres.tensor.checkpoint import dumps_params, load_params, loads_params, save_params
from senres.tensor.core import Tape, Tensor, active_tape, as_tensor
from senres.tensor.gradcheck import grad_check, numerical_grad, tape_grad
from senres.tensor.ops import (
    add,
    avg_pool1d,
    concat,
    conv1d,
    cross_entropy,
    dropout,
    exp,
    index,
    l2_normalize,
    log,
    logsumexp,
    lstm,
    lstm_step,
    matmul,
    mean,
    mul,
    pick,
    relu,
    reshape,
    scale,
    sigmoid,
    stop_gradient,
    sub,
    sum,
    tanh,
    transpose,
)
from senres.tensor.optim import Adam, AdamState, adam_step

__all__ = [
    "Adam", "AdamState", "Tape", "Tensor", "active_tape", "adam_step", "add", "as_tensor",
    "avg_pool1d", "concat", "conv1d", "cross_entropy", "dropout", "dumps_params", "exp",
    "grad_check", "index", "l2_normalize", "load_params", "loads_params", "log", "logsumexp",
    "lstm", "lstm_step", "matmul", "mean", "mul", "numerical_grad", "pick", "relu", "reshape",
    "save_params", "scale", "sigmoid", "stop_gradient", "sub", "sum", "tanh", "tape_grad",
    "transpose",
]
