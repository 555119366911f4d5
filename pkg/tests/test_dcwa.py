from __future__ import annotations

import logging

import numpy as np
import pytest

from app.averaging.dcwa import average_weights
from app.core.bank import DcaParameterBank, init_bank
from app.core.checkpoint import inspect_checkpoint, load_bank
from app.model.partition import Granularity, partition


def test_identical_instances_average_to_themselves(tiny_model, rng):
    base = rng.standard_normal(tiny_model.param_count)
    bank = DcaParameterBank.replicate(partition(tiny_model, "layerwise"), base, 4)
    assert np.array_equal(average_weights(bank).params, base)


def test_two_instances_give_their_midpoint(tiny_model):
    bank = init_bank(tiny_model, "layerwise", 2, seed=3)
    expected = (bank.values[0] + bank.values[1]) / 2
    assert np.array_equal(average_weights(bank).params, expected)


def test_matches_extended_precision_mean(tiny_model):
    bank = init_bank(tiny_model, "neuronwise", 5, seed=9)
    oracle = bank.values.astype(np.longdouble).mean(axis=0).astype(np.float64)
    np.testing.assert_allclose(average_weights(bank).params, oracle, rtol=0, atol=1e-14)


def test_instance_order_does_not_matter(tiny_model, rng):
    bank = init_bank(tiny_model, "layerwise", 6, seed=1)
    shuffled = DcaParameterBank(
        bank.partition, bank.values[rng.permutation(bank.n)], rng_seed=bank.rng_seed
    )
    assert average_weights(bank).params.tobytes() == average_weights(shuffled).params.tobytes()


def test_averaging_is_linear_in_scale(tiny_model):
    bank = init_bank(tiny_model, "layerwise", 3, seed=2)
    np.testing.assert_allclose(
        average_weights(bank.scaled(2.5)).params,
        2.5 * average_weights(bank).params,
        rtol=1e-12,
    )


@pytest.mark.parametrize(
    "g, coarse",
    [("neuronwise", False), ("layerwise", False), ("blockwise", True), ("modelwise", True)],
)
def test_coarse_banks_are_flagged(tiny_model, caplog, g, coarse):
    bank = init_bank(tiny_model, g, 2, seed=0)
    with caplog.at_level(logging.WARNING, logger="app.averaging.dcwa"):
        result = average_weights(bank)
    assert result.coarse_grain_warning is coarse
    assert result.granularity is Granularity(Granularity.parse(g))
    assert result.n == 2
    assert bool(caplog.records) is coarse


def test_saved_average_is_a_single_model(tmp_path, tiny_model):
    result = average_weights(init_bank(tiny_model, "layerwise", 3, seed=0))
    path = result.save(tmp_path / "dcwa.ckpt")
    header = inspect_checkpoint(path)
    assert header.n == 1 and header.granularity is Granularity.MODELWISE
    restored = load_bank(path, partition(tiny_model, "modelwise"))
    assert np.array_equal(restored.values[0], result.params)
