"""Minimal reverse-mode automatic differentiation on float64 numpy buffers."""

from .tensor import Tensor, add, sub, mul, scale, tsum, tmean, square, concat_scalars
from .params import Parameter, ParameterSet
from .layers import (
    lstm, layer_norm, dense, gradient_reversal, last_timestep, squeeze_width_one,
)
from .losses import mse_loss, cross_entropy_loss, l2_penalty, irm_beta_gradient
from .optim import Adam
from . import checkpoint

__all__ = [
    "Tensor", "add", "sub", "mul", "scale", "tsum", "tmean", "square",
    "concat_scalars",
    "Parameter", "ParameterSet",
    "lstm", "layer_norm", "dense", "gradient_reversal", "last_timestep",
    "squeeze_width_one",
    "mse_loss", "cross_entropy_loss", "l2_penalty", "irm_beta_gradient",
    "Adam", "checkpoint",
]
