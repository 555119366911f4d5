"""
Primitive operations of the compute graph.

Ops are stateless: forward returns the output plus whatever context the
backward rule needs, and the graph keeps that context between the two
passes. Parameterised ops read their slice of the flat parameter vector.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import special

from app.core.types import FloatArray


class Op(ABC):
    name: str = "op"
    arity: int = 1

    @property
    def param_count(self) -> int:
        return 0

    @abstractmethod
    def forward(
        self, inputs: tuple[FloatArray, ...], params: FloatArray
    ) -> tuple[FloatArray, Any]:
        ...

    @abstractmethod
    def backward(
        self, ctx: Any, grad_out: FloatArray, params: FloatArray, grad_params: FloatArray
    ) -> tuple[FloatArray, ...]:
        """Return input gradients; accumulate parameter gradients in place."""


@dataclass(frozen=True)
class Dense(Op):
    """y = x W^T + b with W stored row-major as [out_dim, in_dim], then b."""

    in_dim: int
    out_dim: int
    offset: int
    name: str = "dense"
    arity: int = 1

    @property
    def weight_count(self) -> int:
        return self.in_dim * self.out_dim

    @property
    def param_count(self) -> int:
        return self.weight_count + self.out_dim

    def _unpack(self, params: FloatArray) -> tuple[FloatArray, FloatArray]:
        w_end = self.offset + self.weight_count
        weights = params[self.offset:w_end].reshape(self.out_dim, self.in_dim)
        bias = params[w_end:w_end + self.out_dim]
        return weights, bias

    def forward(self, inputs, params):
        (x,) = inputs
        weights, bias = self._unpack(params)
        return x @ weights.T + bias, x

    def backward(self, ctx, grad_out, params, grad_params):
        x = ctx
        weights, _ = self._unpack(params)
        w_end = self.offset + self.weight_count
        grad_params[self.offset:w_end] += (grad_out.T @ x).ravel()
        grad_params[w_end:w_end + self.out_dim] += grad_out.sum(axis=0)
        return (grad_out @ weights,)


@dataclass(frozen=True)
class ReLU(Op):
    name: str = "relu"
    arity: int = 1

    def forward(self, inputs, params):
        (x,) = inputs
        mask = x > 0.0
        return np.where(mask, x, 0.0), mask

    def backward(self, ctx, grad_out, params, grad_params):
        return (np.where(ctx, grad_out, 0.0),)


@dataclass(frozen=True)
class Add(Op):
    """Skip connection: elementwise sum of two branches."""

    name: str = "add"
    arity: int = 2

    def forward(self, inputs, params):
        a, b = inputs
        return a + b, None

    def backward(self, ctx, grad_out, params, grad_params):
        return grad_out, grad_out


@dataclass(frozen=True)
class LogSoftmax(Op):
    name: str = "log_softmax"
    arity: int = 1

    def forward(self, inputs, params):
        (x,) = inputs
        out = special.log_softmax(x, axis=-1)
        return out, out

    def backward(self, ctx, grad_out, params, grad_params):
        probs = np.exp(ctx)
        return (grad_out - probs * grad_out.sum(axis=-1, keepdims=True),)


@dataclass(frozen=True)
class Sum(Op):
    """Scalar reduction over every entry (kept as shape [1])."""

    name: str = "sum"
    arity: int = 1

    def forward(self, inputs, params):
        (x,) = inputs
        return np.array([x.sum()]), x.shape

    def backward(self, ctx, grad_out, params, grad_params):
        return (np.full(ctx, grad_out[0]),)


@dataclass(frozen=True)
class Mean(Op):
    name: str = "mean"
    arity: int = 1

    def forward(self, inputs, params):
        (x,) = inputs
        return np.array([x.mean()]), x.shape

    def backward(self, ctx, grad_out, params, grad_params):
        return (np.full(ctx, grad_out[0] / float(np.prod(ctx))),)
