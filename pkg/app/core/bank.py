"""
DCA parameter bank, proposals, assembly and selective gradient scatter.

Storage: because every component has exactly n instances, the bank keeps
one [n, total_slots] array. Column s belongs to component
`partition.component_of[s]`, and row i holds instance i of every component.
A proposal picks one row per component, so assembling it is a single
gather and scattering into it a single indexed add (each slot is hit
exactly once, so no index collides).
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from app.core.types import (
    ConfigError,
    DimensionError,
    FloatArray,
    IntArray,
    ProposalError,
)
from app.model.partition import Granularity, Partition, partition
from app.model.spec import BuiltModel, ModelSpec, build_model, init_parameters

logger = logging.getLogger(__name__)

# Proposal counts are reported exactly while they fit a signed 64-bit int.
_COUNT_LIMIT = 2**63 - 1


@dataclass(frozen=True)
class Proposal:
    indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)

    def as_array(self) -> IntArray:
        return np.asarray(self.indices, dtype=np.int64)


@dataclass(frozen=True)
class ProposalCount:
    value: int | None
    overflow: bool


class DcaParameterBank:
    def __init__(
        self,
        part: Partition,
        values: FloatArray,
        *,
        rng_seed: int,
        velocity: FloatArray | None = None,
    ) -> None:
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != part.total_slots or values.shape[0] < 1:
            raise DimensionError(
                f"Bank values must be [n, {part.total_slots}]; got {values.shape}."
            )
        self.partition = part
        self.values = values
        self.velocity = (
            np.zeros_like(values) if velocity is None
            else np.ascontiguousarray(velocity, dtype=np.float64)
        )
        self.rng_seed = int(rng_seed)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def granularity(self) -> Granularity:
        return self.partition.granularity

    @property
    def component_count(self) -> int:
        return self.partition.component_count

    @property
    def total_slots(self) -> int:
        return self.partition.total_slots

    def instance(self, component: int, index: int) -> FloatArray:
        slots = self.partition.components[component].slots
        return self.values[index, slots].copy()

    def set_instance(self, component: int, index: int, data: FloatArray) -> None:
        slots = self.partition.components[component].slots
        self.values[index, slots] = data

    def copy(self) -> DcaParameterBank:
        return DcaParameterBank(
            self.partition,
            self.values.copy(),
            rng_seed=self.rng_seed,
            velocity=self.velocity.copy(),
        )

    def scaled(self, factor: float) -> DcaParameterBank:
        return DcaParameterBank(self.partition, self.values * factor, rng_seed=self.rng_seed)

    def new_accumulator(self) -> GradientAccumulator:
        return GradientAccumulator(
            grads=np.zeros_like(self.values),
            touched=np.zeros((self.n, self.component_count), dtype=bool),
        )

    @classmethod
    def replicate(
        cls, part: Partition, params: FloatArray, n: int, *, rng_seed: int = 0
    ) -> DcaParameterBank:
        """Bank whose n instances all equal one base parameterization."""
        return cls(part, np.tile(np.asarray(params, dtype=np.float64), (n, 1)), rng_seed=rng_seed)

    @classmethod
    def from_members(
        cls, model: ModelSpec | BuiltModel, members: list[FloatArray], *, rng_seed: int = 0
    ) -> DcaParameterBank:
        """Modelwise bank holding independently obtained whole-model parameter sets."""
        part = partition(model, Granularity.MODELWISE)
        return cls(part, np.stack(members), rng_seed=rng_seed)


@dataclass
class GradientAccumulator:
    grads: FloatArray
    touched: np.ndarray
    passes: int = field(default=0)

    def reset(self) -> None:
        self.grads.fill(0.0)
        self.touched.fill(False)
        self.passes = 0


def init_bank(
    model: ModelSpec | BuiltModel,
    g: Granularity | str,
    n: int,
    seed: int,
) -> DcaParameterBank:
    """
    n independent Kaiming-uniform initializations, one per instance row.

    Instance i is drawn from child i of SeedSequence(seed), so instance 0
    of any bank equals a single model initialized from the same seed.
    """
    if n < 2:
        raise ConfigError(f"dca.n must be >= 2 for a DCA bank; got {n}.")
    return init_instances(model, g, n, seed)


def init_instances(
    model: ModelSpec | BuiltModel, g: Granularity | str, n: int, seed: int
) -> DcaParameterBank:
    """Like init_bank without the n >= 2 floor; n=1 is a standard single model."""
    built = model if isinstance(model, BuiltModel) else build_model(model)
    part = partition(built, g)
    children = np.random.SeedSequence(seed).spawn(n)
    values = np.stack([init_parameters(built, np.random.default_rng(c)) for c in children])
    logger.debug(
        "Initialized %s bank: n=%d components=%d slots=%d",
        part.granularity.value, n, part.component_count, part.total_slots,
    )
    return DcaParameterBank(part, values, rng_seed=seed)


def sample_proposal(bank: DcaParameterBank, rng: np.random.Generator) -> Proposal:
    """One i.i.d. uniform instance index per component."""
    indices = rng.integers(0, bank.n, size=bank.component_count)
    return Proposal(tuple(int(i) for i in indices))


def enumerate_proposals(bank: DcaParameterBank) -> Iterator[Proposal]:
    """Every proposal exactly once, in lexicographic index order."""
    for combo in itertools.product(range(bank.n), repeat=bank.component_count):
        yield Proposal(combo)


def _slot_choice(bank: DcaParameterBank, proposal: Proposal) -> IntArray:
    if len(proposal) != bank.component_count:
        raise ProposalError(
            f"Proposal has {len(proposal)} indices; bank has "
            f"{bank.component_count} components."
        )
    idx = proposal.as_array()
    if idx.size and (idx.min() < 0 or idx.max() >= bank.n):
        raise ProposalError(
            f"Proposal indices must lie in [0, {bank.n}); got {list(proposal.indices)}."
        )
    return idx[bank.partition.component_of]


def assemble(bank: DcaParameterBank, proposal: Proposal) -> FloatArray:
    """Flat base-model parameters: slot s read from instance proposal[component_of(s)]."""
    rows = _slot_choice(bank, proposal)
    return bank.values[rows, np.arange(bank.total_slots)]


def gather_gradients(
    bank: DcaParameterBank, proposal: Proposal, accumulator: GradientAccumulator
) -> FloatArray:
    """Read an accumulator back through a proposal (adjoint of scatter)."""
    rows = _slot_choice(bank, proposal)
    return accumulator.grads[rows, np.arange(bank.total_slots)]


def scatter_gradients(
    bank: DcaParameterBank,
    proposal: Proposal,
    grads: FloatArray,
    accumulator: GradientAccumulator,
) -> None:
    """Accumulate grads only into the instances the proposal selected."""
    if grads.shape != (bank.total_slots,):
        raise DimensionError(
            f"Gradient has length {grads.size}; bank has {bank.total_slots} slots."
        )
    rows = _slot_choice(bank, proposal)
    accumulator.grads[rows, np.arange(bank.total_slots)] += grads
    accumulator.touched[proposal.as_array(), np.arange(bank.component_count)] = True
    accumulator.passes += 1


def count_proposals(bank: DcaParameterBank) -> ProposalCount:
    return proposal_count(bank.n, bank.component_count)


def proposal_count(n: int, component_count: int) -> ProposalCount:
    value = n**component_count
    if value > _COUNT_LIMIT:
        return ProposalCount(value=None, overflow=True)
    return ProposalCount(value=value, overflow=False)
