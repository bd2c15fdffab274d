from . import autograd, kernels
from .autograd import Tensor, backward, constant, no_grad, parameter, zero_grads
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import Dense, DimensionMismatch, Mlp
from .optim import Adam, NonFiniteGradient, global_norm, gradient_check

__all__ = [
    "Adam",
    "CheckpointError",
    "Dense",
    "DimensionMismatch",
    "Mlp",
    "NonFiniteGradient",
    "Tensor",
    "autograd",
    "backward",
    "constant",
    "global_norm",
    "gradient_check",
    "kernels",
    "load_checkpoint",
    "no_grad",
    "parameter",
    "save_checkpoint",
    "zero_grads",
]
