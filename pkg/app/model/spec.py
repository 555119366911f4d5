"""
Residual-MLP base architecture.

Structure (dense layers in parameter-slot order):
    stem:   input_dim -> width, relu
    trunk:  one plain width -> width layer + relu, then residual blocks
    block:  h -> relu(h + D2(relu(D1(h))))
    head:   width -> class_count (logits)

Every dense layer stores its weights row-major as [out_dim, in_dim]
followed by its bias, so output neuron k owns weight row k and bias k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from app.autodiff.graph import ComputeGraph, Node
from app.autodiff.ops import Add, Dense, ReLU
from app.core.types import ConfigError, FloatArray

LayerRole = Literal["stem", "plain", "block", "head"]


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    class_count: int
    hidden_width: int
    # Residual blocks per trunk, e.g. (2, 2) = two trunks of two blocks.
    trunks: tuple[int, ...]

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ConfigError(f"model.input_dim must be >= 1; got {self.input_dim}.")
        if self.class_count < 2:
            raise ConfigError(f"model.class_count must be >= 2; got {self.class_count}.")
        if self.hidden_width < 1:
            raise ConfigError(f"model.hidden_width must be >= 1; got {self.hidden_width}.")
        if not self.trunks:
            raise ConfigError("model.trunks must list at least one trunk.")
        if any(b < 1 for b in self.trunks):
            raise ConfigError(f"Every trunk needs >= 1 residual block; got {list(self.trunks)}.")


@dataclass(frozen=True)
class DenseLayer:
    name: str
    role: LayerRole
    trunk: int | None
    block: int | None
    in_dim: int
    out_dim: int
    offset: int

    @property
    def weight_count(self) -> int:
        return self.in_dim * self.out_dim

    @property
    def param_count(self) -> int:
        return self.weight_count + self.out_dim

    @property
    def bias_offset(self) -> int:
        return self.offset + self.weight_count

    @property
    def end(self) -> int:
        return self.offset + self.param_count

    def op(self) -> Dense:
        return Dense(in_dim=self.in_dim, out_dim=self.out_dim, offset=self.offset)


@dataclass(frozen=True)
class BuiltModel:
    """Parameter layout plus a factory for fresh compute graphs."""

    spec: ModelSpec
    layers: tuple[DenseLayer, ...]
    param_count: int

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def neuron_count(self) -> int:
        return sum(layer.out_dim for layer in self.layers)

    def graph(self) -> ComputeGraph:
        nodes: list[Node] = []

        def emit(op, *inputs: int, name: str = "") -> int:
            nodes.append(Node(op=op, inputs=tuple(inputs), name=name))
            return len(nodes)

        by_name = {layer.name: layer for layer in self.layers}
        h = 0
        h = emit(by_name["stem"].op(), h, name="stem")
        h = emit(ReLU(), h)
        for t, blocks in enumerate(self.spec.trunks):
            h = emit(by_name[f"trunk{t}.plain"].op(), h, name=f"trunk{t}.plain")
            h = emit(ReLU(), h)
            for b in range(blocks):
                prefix = f"trunk{t}.block{b}"
                skip = h
                r = emit(by_name[f"{prefix}.fc0"].op(), h, name=f"{prefix}.fc0")
                r = emit(ReLU(), r)
                r = emit(by_name[f"{prefix}.fc1"].op(), r, name=f"{prefix}.fc1")
                h = emit(Add(), skip, r, name=f"{prefix}.skip")
                h = emit(ReLU(), h)
        emit(by_name["head"].op(), h, name="head")

        return ComputeGraph(nodes, input_dim=self.spec.input_dim, param_count=self.param_count)


def build_model(spec: ModelSpec) -> BuiltModel:
    """Lay out parameters: stem, trunks in order (plain layer, blocks), head."""
    spec.validate()
    width = spec.hidden_width
    layers: list[DenseLayer] = []
    offset = 0

    def add(name: str, role: LayerRole, in_dim: int, out_dim: int,
            trunk: int | None = None, block: int | None = None) -> None:
        nonlocal offset
        layer = DenseLayer(name, role, trunk, block, in_dim, out_dim, offset)
        layers.append(layer)
        offset = layer.end

    add("stem", "stem", spec.input_dim, width)
    for t, blocks in enumerate(spec.trunks):
        add(f"trunk{t}.plain", "plain", width, width, trunk=t)
        for b in range(blocks):
            add(f"trunk{t}.block{b}.fc0", "block", width, width, trunk=t, block=b)
            add(f"trunk{t}.block{b}.fc1", "block", width, width, trunk=t, block=b)
    add("head", "head", width, spec.class_count)

    return BuiltModel(spec=spec, layers=tuple(layers), param_count=offset)


def init_parameters(model: BuiltModel, rng: np.random.Generator) -> FloatArray:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    params = np.zeros(model.param_count, dtype=np.float64)
    for layer in model.layers:
        bound = np.sqrt(6.0 / layer.in_dim)
        params[layer.offset:layer.bias_offset] = rng.uniform(
            -bound, bound, size=layer.weight_count
        )
    return params
