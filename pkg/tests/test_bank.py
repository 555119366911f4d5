from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from scipy import stats

from app.core.bank import (
    DcaParameterBank,
    Proposal,
    assemble,
    count_proposals,
    enumerate_proposals,
    gather_gradients,
    init_bank,
    init_instances,
    proposal_count,
    sample_proposal,
    scatter_gradients,
)
from app.core.types import ConfigError, DimensionError, ProposalError
from app.model.partition import Granularity, partition
from app.model.spec import ModelSpec, build_model


@pytest.fixture
def trunk_model():
    # Trunkwise on a single trunk has three components: stem, trunk0, head.
    return build_model(ModelSpec(input_dim=2, class_count=2, hidden_width=3, trunks=(1,)))


def test_init_is_deterministic(tiny_model):
    a = init_bank(tiny_model, "layerwise", 2, seed=7)
    b = init_bank(tiny_model, "layerwise", 2, seed=7)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values[0], a.values[1])


def test_init_shape_and_velocity(tiny_model):
    bank = init_bank(tiny_model, Granularity.LAYERWISE, 5, seed=0)
    assert bank.values.shape == (5, tiny_model.param_count)
    assert bank.component_count == 5
    assert np.array_equal(bank.velocity, np.zeros_like(bank.values))


def test_bank_needs_two_instances(tiny_model):
    with pytest.raises(ConfigError, match="n must be >= 2"):
        init_bank(tiny_model, "layerwise", 1, seed=0)


def test_instance_zero_equals_single_model_init(tiny_model):
    bank = init_bank(tiny_model, "modelwise", 3, seed=11)
    single = init_instances(tiny_model, "modelwise", 1, seed=11)
    assert np.array_equal(bank.values[0], single.values[0])


def test_weights_respect_kaiming_bound(tiny_model):
    bank = init_bank(tiny_model, "modelwise", 2, seed=3)
    for layer in tiny_model.layers:
        weights = bank.values[0, layer.offset:layer.bias_offset]
        bound = np.sqrt(6.0 / layer.in_dim)
        assert np.all(np.abs(weights) <= bound)
        assert np.all(bank.values[0, layer.bias_offset:layer.end] == 0.0)


def test_single_instance_sampler_returns_zeros(tiny_model, rng):
    bank = init_instances(tiny_model, "layerwise", 1, seed=0)
    assert sample_proposal(bank, rng).indices == (0,) * bank.component_count


def test_fixed_rng_state_gives_fixed_proposal(tiny_model):
    bank = init_bank(tiny_model, "layerwise", 3, seed=0)
    a = sample_proposal(bank, np.random.default_rng(5))
    b = sample_proposal(bank, np.random.default_rng(5))
    assert a == b


def test_proposals_are_uniform(trunk_model):
    bank = init_bank(trunk_model, "trunkwise", 2, seed=0)
    assert bank.component_count == 3
    rng = np.random.default_rng(2024)
    draws = 100_000
    counts = Counter(sample_proposal(bank, rng).indices for _ in range(draws))
    assert len(counts) == 8
    observed = np.array([counts[p.indices] for p in enumerate_proposals(bank)])
    _, p_value = stats.chisquare(observed)
    assert p_value > 0.001


def test_count_proposals(trunk_model, tiny_model):
    assert count_proposals(init_bank(trunk_model, "trunkwise", 2, seed=0)).value == 8
    assert count_proposals(init_bank(tiny_model, "modelwise", 5, seed=0)).value == 5
    big = proposal_count(5, 200)
    assert big.overflow and big.value is None
    assert proposal_count(2, 62).value == 2**62
    assert proposal_count(2, 63).overflow


def test_enumerate_visits_every_proposal_once(trunk_model):
    bank = init_bank(trunk_model, "trunkwise", 3, seed=0)
    seen = [p.indices for p in enumerate_proposals(bank)]
    assert len(seen) == len(set(seen)) == 27


def test_modelwise_assembly_is_the_instance(tiny_model):
    bank = init_bank(tiny_model, "modelwise", 3, seed=0)
    assert np.array_equal(assemble(bank, Proposal((2,))), bank.values[2])


def test_assembly_matches_manual_splice(trunk_model):
    bank = init_bank(trunk_model, "trunkwise", 2, seed=4)
    view = assemble(bank, Proposal((0, 1, 0)))
    expected = np.empty(bank.total_slots)
    for c, i in enumerate((0, 1, 0)):
        slots = bank.partition.components[c].slots
        expected[slots] = bank.instance(c, i)
    assert np.array_equal(view, expected)


def test_identical_instances_assemble_identically(tiny_model):
    part = partition(tiny_model, "layerwise")
    bank = DcaParameterBank.replicate(part, np.arange(tiny_model.param_count, dtype=float), 3)
    a = assemble(bank, Proposal((0, 1, 2, 0, 1)))
    b = assemble(bank, Proposal((2, 2, 2, 2, 2)))
    assert np.array_equal(a, b)


def test_invalid_proposals_are_rejected(tiny_model):
    bank = init_bank(tiny_model, "layerwise", 2, seed=0)
    with pytest.raises(ProposalError):
        assemble(bank, Proposal((0, 1)))
    with pytest.raises(ProposalError):
        assemble(bank, Proposal((0, 0, 0, 0, 2)))


def test_scatter_conserves_mass_and_leaves_others_alone(tiny_model, rng):
    bank = init_bank(tiny_model, "layerwise", 3, seed=0)
    acc = bank.new_accumulator()
    acc.grads[:] = rng.standard_normal(acc.grads.shape)
    before = acc.grads.copy()
    grads = rng.standard_normal(bank.total_slots)
    proposal = Proposal((0, 2, 1, 1, 0))

    scatter_gradients(bank, proposal, grads, acc)

    np.testing.assert_allclose((acc.grads - before).sum(axis=0), grads, rtol=0, atol=1e-12)
    for c, chosen in enumerate(proposal.indices):
        slots = bank.partition.components[c].slots
        for i in range(bank.n):
            if i != chosen:
                assert np.array_equal(acc.grads[i, slots], before[i, slots])
    assert acc.passes == 1
    assert acc.touched.sum() == bank.component_count


def test_scatter_then_gather_is_exact(tiny_model, rng):
    bank = init_bank(tiny_model, "layerwise", 4, seed=0)
    acc = bank.new_accumulator()
    grads = rng.standard_normal(bank.total_slots)
    proposal = sample_proposal(bank, rng)
    scatter_gradients(bank, proposal, grads, acc)
    assert np.array_equal(gather_gradients(bank, proposal, acc), grads)


def test_two_disjoint_scatters_match_hand_bookkeeping(trunk_model):
    bank = init_bank(trunk_model, "trunkwise", 2, seed=0)
    acc = bank.new_accumulator()
    g1 = np.full(bank.total_slots, 1.0)
    g2 = np.full(bank.total_slots, 2.0)
    scatter_gradients(bank, Proposal((0, 0, 0)), g1, acc)
    scatter_gradients(bank, Proposal((1, 1, 1)), g2, acc)
    assert np.all(acc.grads[0] == 1.0)
    assert np.all(acc.grads[1] == 2.0)
    assert acc.touched.all()


def test_scatter_checks_gradient_length(tiny_model):
    bank = init_bank(tiny_model, "layerwise", 2, seed=0)
    with pytest.raises(DimensionError):
        scatter_gradients(bank, Proposal((0,) * 5), np.zeros(3), bank.new_accumulator())
