"""Minimal differentiable engine: just the layers the gap forecaster needs."""
from .checkpoint import assign_arrays, load_checkpoint, save_checkpoint
from .layers import ConvLayer, Dense, EmbeddingTable, ResidualUnit, glorot_uniform, residual_forward
from .optim import SGD, Adam, Optimizer, make_optimizer, optimizer_step
from .tensor import (Tensor, add, backward, concat, conv2d, dense, embed, flatten, mean,
                     mse_loss, mul, relu, reshape, square, sub, tsum)

__all__ = [
    "Tensor", "add", "sub", "mul", "square", "relu", "tsum", "mean", "reshape", "flatten",
    "concat", "dense", "conv2d", "embed", "mse_loss", "backward",
    "ConvLayer", "ResidualUnit", "Dense", "EmbeddingTable", "glorot_uniform", "residual_forward",
    "Optimizer", "SGD", "Adam", "make_optimizer", "optimizer_step",
    "save_checkpoint", "load_checkpoint", "assign_arrays",
]
