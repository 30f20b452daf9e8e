"""Parameter containers for the layers the forecasting network is built from."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, add, conv2d, dense, embed, relu


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class ConvLayer:
    filters: Tensor  # (out_channels, in_channels, n, m)
    bias: Tensor

    @classmethod
    def create(cls, rng, in_channels: int, out_channels: int, size: tuple[int, int],
               name: str = "conv") -> "ConvLayer":
        n, m = size
        if n % 2 == 0 or m % 2 == 0:
            raise ShapeError(f"filter size must be odd, got {n}x{m}")
        shape = (out_channels, in_channels, n, m)
        fans = (in_channels * n * m, out_channels * n * m)
        w = glorot_uniform(rng, shape, *fans)
        return cls(Tensor(w, True, f"{name}.filters"), Tensor(np.zeros(out_channels), True, f"{name}.bias"))

    @property
    def in_channels(self) -> int:
        return self.filters.shape[1]

    @property
    def out_channels(self) -> int:
        return self.filters.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.filters, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.filters, self.bias]


@dataclass
class ResidualUnit:
    """Two same-shape convolutions, each followed by ReLU, added to the input.

    With ``skip=False`` the identity connection is dropped, giving a plain
    two-layer CNN block with the same parameter shapes.
    """

    conv1: ConvLayer
    conv2: ConvLayer
    skip: bool = True

    def __post_init__(self):
        c = self.conv1.in_channels
        if not (self.conv1.out_channels == c == self.conv2.in_channels == self.conv2.out_channels):
            raise ShapeError("residual unit convolutions must keep the channel count")

    @classmethod
    def create(cls, rng, channels: int, size, skip: bool = True, name: str = "res") -> "ResidualUnit":
        return cls(ConvLayer.create(rng, channels, channels, size, f"{name}.conv1"),
                   ConvLayer.create(rng, channels, channels, size, f"{name}.conv2"),
                   skip)

    def __call__(self, x: Tensor) -> Tensor:
        return residual_forward(x, self)

    def parameters(self) -> list[Tensor]:
        return self.conv1.parameters() + self.conv2.parameters()


def residual_forward(x: Tensor, unit: ResidualUnit) -> Tensor:
    channel_axis = x.data.ndim - 3
    if x.data.ndim not in (3, 4) or x.shape[channel_axis] != unit.conv1.in_channels:
        raise ShapeError(f"input {x.shape} does not fit a {unit.conv1.in_channels}-channel residual unit")
    out = relu(unit.conv2(relu(unit.conv1(x))))
    return add(out, x) if unit.skip else out


@dataclass
class Dense:
    weights: Tensor  # (q, p)
    bias: Tensor

    @classmethod
    def create(cls, rng, p: int, q: int, name: str = "dense") -> "Dense":
        w = glorot_uniform(rng, (q, p), p, q)
        return cls(Tensor(w, True, f"{name}.weights"), Tensor(np.zeros(q), True, f"{name}.bias"))

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weights, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weights, self.bias]


@dataclass
class EmbeddingTable:
    weights: Tensor  # (vocabulary_size, dim)

    @classmethod
    def create(cls, rng, vocabulary_size: int, dim: int, name: str = "embedding") -> "EmbeddingTable":
        w = glorot_uniform(rng, (vocabulary_size, dim), vocabulary_size, dim)
        return cls(Tensor(w, True, f"{name}.weights"))

    @property
    def vocabulary_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def __call__(self, tokens) -> Tensor:
        return embed(tokens, self.weights)

    def parameters(self) -> list[Tensor]:
        return [self.weights]
