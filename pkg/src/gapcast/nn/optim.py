from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import NumericError
from .tensor import Tensor


class Optimizer:
    def __init__(self, params: Iterable[Tensor], learning_rate: float):
        if learning_rate < 0 or not np.isfinite(learning_rate):
            raise ValueError(f"learning rate must be a finite non-negative number, got {learning_rate}")
        self.params = list(params)
        self.learning_rate = learning_rate

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _checked_grads(self):
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {p.name or i}")
            yield i, p, g

    def step(self) -> None:
        # validate everything first so a bad gradient leaves parameters untouched
        updates = list(self._checked_grads())
        for i, p, g in updates:
            self._update(i, p, g)
        self.zero_grad()

    def _update(self, i: int, p: Tensor, g: np.ndarray) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def _update(self, i, p, g):
        p.data -= self.learning_rate * g


class Adam(Optimizer):
    def __init__(self, params, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, learning_rate)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        super().step()

    def _update(self, i, p, g):
        self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
        self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
        m_hat = self.m[i] / (1 - self.beta1 ** self.t)
        v_hat = self.v[i] / (1 - self.beta2 ** self.t)
        p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: str, params, learning_rate: float) -> Optimizer:
    if name == "sgd":
        return SGD(params, learning_rate)
    if name == "adam":
        return Adam(params, learning_rate)
    raise ValueError(f"unknown optimizer {name!r}")


def optimizer_step(params: Iterable[Tensor], learning_rate: float) -> None:
    """One plain gradient-descent update, clearing gradients afterwards."""
    SGD(params, learning_rate).step()
