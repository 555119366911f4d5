from __future__ import annotations

import numpy as np
import pytest

from app.core.types import ConfigError
from app.model.partition import Granularity, partition
from app.model.spec import ModelSpec, build_model


def test_one_trunk_one_block_has_five_dense_layers(tiny_model):
    names = [layer.name for layer in tiny_model.layers]
    assert names == ["stem", "trunk0.plain", "trunk0.block0.fc0", "trunk0.block0.fc1", "head"]
    # input 2, width 4, 3 classes: stem 2*4+4, three 4*4+4 layers, head 4*3+3
    assert tiny_model.param_count == 12 + 3 * 20 + 15


def test_zero_width_is_a_config_error():
    with pytest.raises(ConfigError):
        build_model(ModelSpec(input_dim=2, class_count=3, hidden_width=0, trunks=(1,)))


def test_identical_specs_give_identical_layouts(tiny_spec):
    assert build_model(tiny_spec) == build_model(tiny_spec)


@pytest.mark.parametrize("g", list(Granularity))
@pytest.mark.parametrize("trunks", [(1,), (2, 1), (1, 1, 2)])
def test_components_cover_every_slot_exactly_once(g, trunks):
    model = build_model(ModelSpec(input_dim=3, class_count=2, hidden_width=3, trunks=trunks))
    part = partition(model, g)
    hits = np.zeros(model.param_count, dtype=np.int64)
    for index, comp in enumerate(part.components):
        hits[comp.slots] += 1
        assert np.all(part.component_of[comp.slots] == index)
    assert np.all(hits == 1)
    assert part.total_slots == model.param_count


def test_component_counts_per_granularity(tiny_model):
    assert partition(tiny_model, "modelwise").component_count == 1
    assert partition(tiny_model, "layerwise").component_count == 5
    # stem, plain, the block, head
    assert partition(tiny_model, "blockwise").component_count == 4
    # stem, trunk0, head
    assert partition(tiny_model, "trunkwise").component_count == 3
    assert partition(tiny_model, "neuronwise").component_count == tiny_model.neuron_count


def test_neuronwise_count_is_sum_of_fan_outs():
    model = build_model(ModelSpec(input_dim=4, class_count=3, hidden_width=4, trunks=(1,)))
    part = partition(model, Granularity.NEURONWISE)
    assert part.component_count == sum(layer.out_dim for layer in model.layers)
    # A neuron owns its weight row and its bias.
    head = model.layers[-1]
    first = next(c for c in part.components if c.name == "head[0]")
    expected = [*range(head.offset, head.offset + head.in_dim), head.bias_offset]
    assert first.slots.tolist() == expected


@pytest.mark.parametrize(
    "fine, coarse",
    [
        ("neuronwise", "layerwise"),
        ("layerwise", "blockwise"),
        ("blockwise", "trunkwise"),
        ("trunkwise", "modelwise"),
    ],
)
def test_finer_components_nest_inside_coarser_ones(fine, coarse):
    model = build_model(ModelSpec(input_dim=2, class_count=3, hidden_width=3, trunks=(2, 1)))
    f, c = partition(model, fine), partition(model, coarse)
    for comp in f.components:
        assert len(set(c.component_of[comp.slots].tolist())) == 1


def test_short_granularity_names_are_accepted():
    assert Granularity(Granularity.parse("layer")) is Granularity.LAYERWISE
    assert Granularity(Granularity.parse("Channel")) is Granularity.NEURONWISE


def test_checkpoint_tags_round_trip():
    for g in Granularity:
        assert Granularity.from_tag(g.tag) is g
