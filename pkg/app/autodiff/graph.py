"""
Reverse-mode automatic differentiation over a static list of nodes.

Value ids: 0 is the graph input, node k produces value k + 1. A node may
only read values produced before it, so list order is a topological order
and backward simply walks the list in reverse.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from app.autodiff.ops import Op
from app.autodiff.tensor import Tensor
from app.core.checks import assert_finite, assert_shape
from app.core.types import DimensionError, FloatArray, StateError


@dataclass(frozen=True)
class Node:
    op: Op
    inputs: tuple[int, ...]
    name: str = ""


@dataclass
class _ForwardCache:
    params: FloatArray
    values: list[FloatArray]
    contexts: list[Any]
    param_tensor: Tensor | None


class ComputeGraph:
    """
    Single-threaded: one graph instance caches one forward pass at a time.
    Run parallel work on separate instances.
    """

    def __init__(
        self,
        nodes: Sequence[Node],
        *,
        input_dim: int,
        param_count: int,
    ) -> None:
        for k, node in enumerate(nodes):
            if len(node.inputs) != node.op.arity:
                raise DimensionError(
                    f"Node {k} ({node.op.name}) takes {node.op.arity} input(s); "
                    f"got {len(node.inputs)}."
                )
            if any(v < 0 or v > k for v in node.inputs):
                raise StateError(
                    f"Node {k} ({node.op.name}) reads a value not produced before it."
                )
        self._nodes = tuple(nodes)
        self.input_dim = input_dim
        self.param_count = param_count
        self._cache: _ForwardCache | None = None

    @property
    def nodes(self) -> tuple[Node, ...]:
        return self._nodes

    def forward(self, params: FloatArray | Tensor, inputs: Tensor | FloatArray) -> Tensor:
        param_tensor = params if isinstance(params, Tensor) else None
        if param_tensor is not None:
            flat = param_tensor.data
        else:
            flat = np.asarray(params, dtype=np.float64)
        x = inputs.data if isinstance(inputs, Tensor) else np.asarray(inputs, dtype=np.float64)

        if flat.shape != (self.param_count,):
            raise DimensionError(
                f"Parameter vector has length {flat.size}; graph expects {self.param_count}."
            )
        assert_shape(x, (None, self.input_dim), what="graph input")

        values: list[FloatArray] = [x]
        contexts: list[Any] = []
        for node in self._nodes:
            out, ctx = node.op.forward(tuple(values[v] for v in node.inputs), flat)
            values.append(out)
            contexts.append(ctx)

        output = values[-1]
        assert_finite(output, what="forward output")
        self._cache = _ForwardCache(
            params=flat, values=values, contexts=contexts, param_tensor=param_tensor
        )
        return Tensor(output)

    def backward(self, grad_output: FloatArray | Tensor) -> FloatArray:
        """
        Propagate d(loss)/d(output) back to the parameters.

        Returns the flat parameter gradient; when forward received a Tensor,
        its grad slot is populated as well.
        """
        if self._cache is None:
            raise StateError("backward() called before forward().")
        cache = self._cache

        seed = grad_output.data if isinstance(grad_output, Tensor) else np.asarray(
            grad_output, dtype=np.float64
        )
        if seed.shape != cache.values[-1].shape:
            raise DimensionError(
                f"Output gradient has shape {seed.shape}; "
                f"output has shape {cache.values[-1].shape}."
            )

        grad_params = np.zeros(self.param_count, dtype=np.float64)
        grads: list[FloatArray | None] = [None] * len(cache.values)
        grads[-1] = seed

        for k in range(len(self._nodes) - 1, -1, -1):
            g = grads[k + 1]
            if g is None:
                # Node output does not reach the loss.
                continue
            node = self._nodes[k]
            input_grads = node.op.backward(cache.contexts[k], g, cache.params, grad_params)
            for v, gi in zip(node.inputs, input_grads):
                grads[v] = gi if grads[v] is None else grads[v] + gi

        assert_finite(grad_params, what="parameter gradient")
        if cache.param_tensor is not None:
            cache.param_tensor.grad = grad_params
        return grad_params


def forward(
    graph: ComputeGraph, params: FloatArray | Tensor, inputs: Tensor | FloatArray
) -> Tensor:
    return graph.forward(params, inputs)


def backward(graph: ComputeGraph, grad_output: FloatArray | Tensor) -> FloatArray:
    return graph.backward(grad_output)
