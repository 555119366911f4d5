"""
DCA components at each granularity level.

A component is a set of parameter slots that is instantiated n times in a
DCA bank. Granularities nest: every neuron sits in one layer, every layer in
one block (or is a block of its own), every block in one trunk (or stem /
head), and everything in the model.
"""

from __future__ import annotations

from collections.abc import Callable, Hashable
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from app.core.types import IntArray
from app.model.spec import BuiltModel, DenseLayer, ModelSpec, build_model


class Granularity(str, Enum):
    NEURONWISE = "neuronwise"
    LAYERWISE = "layerwise"
    BLOCKWISE = "blockwise"
    TRUNKWISE = "trunkwise"
    MODELWISE = "modelwise"

    @property
    def is_fine(self) -> bool:
        return self in (Granularity.NEURONWISE, Granularity.LAYERWISE)

    @property
    def tag(self) -> int:
        """Stable u8 tag used in the checkpoint header."""
        return _ORDER.index(self)

    @classmethod
    def from_tag(cls, tag: int) -> Granularity:
        return _ORDER[tag]

    @classmethod
    def parse(cls, value: object) -> object:
        """Accept short names ("layer", "trunk", ...) alongside the full ones."""
        if isinstance(value, str):
            key = value.strip().lower()
            return _ALIASES.get(key, key)
        return value


_ORDER: tuple[Granularity, ...] = (
    Granularity.NEURONWISE,
    Granularity.LAYERWISE,
    Granularity.BLOCKWISE,
    Granularity.TRUNKWISE,
    Granularity.MODELWISE,
)

_ALIASES: dict[str, str] = {
    "neuron": "neuronwise",
    # Channels are the convolutional counterpart of dense-layer neurons.
    "channel": "neuronwise",
    "channelwise": "neuronwise",
    "layer": "layerwise",
    "block": "blockwise",
    "trunk": "trunkwise",
    "model": "modelwise",
}


@dataclass(frozen=True, eq=False)
class Component:
    name: str
    ranges: tuple[tuple[int, int], ...]
    slots: IntArray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.slots.size)


@dataclass(frozen=True, eq=False)
class Partition:
    granularity: Granularity
    components: tuple[Component, ...]
    total_slots: int
    component_of: IntArray = field(repr=False)
    model: BuiltModel = field(repr=False)

    @property
    def component_count(self) -> int:
        return len(self.components)


def _layer_key(g: Granularity) -> Callable[[DenseLayer], Hashable]:
    if g is Granularity.LAYERWISE:
        return lambda layer: layer.name
    if g is Granularity.BLOCKWISE:
        return lambda layer: (
            f"trunk{layer.trunk}.block{layer.block}" if layer.role == "block" else layer.name
        )
    if g is Granularity.TRUNKWISE:
        return lambda layer: f"trunk{layer.trunk}" if layer.trunk is not None else layer.name
    return lambda layer: "model"


def _neuron_ranges(layer: DenseLayer) -> list[tuple[str, list[tuple[int, int]]]]:
    out = []
    for k in range(layer.out_dim):
        row = layer.offset + k * layer.in_dim
        bias = layer.bias_offset + k
        out.append((f"{layer.name}[{k}]", [(row, row + layer.in_dim), (bias, bias + 1)]))
    return out


def partition(model: ModelSpec | BuiltModel, g: Granularity | str) -> Partition:
    built = model if isinstance(model, BuiltModel) else build_model(model)
    g = Granularity(g)

    grouped: dict[Hashable, list[tuple[int, int]]] = {}
    if g is Granularity.NEURONWISE:
        for layer in built.layers:
            for name, ranges in _neuron_ranges(layer):
                grouped[name] = ranges
    else:
        key = _layer_key(g)
        for layer in built.layers:
            grouped.setdefault(key(layer), []).append((layer.offset, layer.end))

    component_of = np.full(built.param_count, -1, dtype=np.int64)
    components: list[Component] = []
    for index, (name, ranges) in enumerate(grouped.items()):
        merged = _merge_ranges(ranges)
        slots = np.concatenate([np.arange(a, b, dtype=np.int64) for a, b in merged])
        component_of[slots] = index
        components.append(Component(name=str(name), ranges=tuple(merged), slots=slots))

    return Partition(
        granularity=g,
        components=tuple(components),
        total_slots=built.param_count,
        component_of=component_of,
        model=built,
    )


def _merge_ranges(ranges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for a, b in sorted(ranges):
        if merged and merged[-1][1] == a:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return merged
