"""Tensor arithmetic, reverse-mode autodiff, SGD and seeded random streams."""

from .optim import sgd_step
from .rng import RngStream, purpose_id, stream
from .tensor import (
    LEAKY_SLOPE,
    PROB_CLAMP,
    NonFiniteError,
    ShapeError,
    Tensor,
    add,
    backward,
    clip,
    concat,
    exp,
    kl_divergence,
    leaky_relu,
    lift,
    log,
    matmul,
    mean,
    mul,
    sigmoid,
    softmax,
    tsum,
)

__all__ = [
    "LEAKY_SLOPE",
    "PROB_CLAMP",
    "NonFiniteError",
    "RngStream",
    "ShapeError",
    "Tensor",
    "add",
    "backward",
    "clip",
    "concat",
    "exp",
    "kl_divergence",
    "leaky_relu",
    "lift",
    "log",
    "matmul",
    "mean",
    "mul",
    "purpose_id",
    "sgd_step",
    "sigmoid",
    "softmax",
    "stream",
    "tsum",
]
