"""
Checkpoint persistence.

Binary, little-endian:

    magic            4 bytes  b"DCA1"
    version          u32
    granularity tag  u8
    n                u16
    component_count  u32
    per component:   slot_count u64, then n arrays of slot_count f64
    footer:          u32 CRC32 of every byte before the footer

Single models (standard training, DCWA) are stored as one modelwise
component with n = 1.
"""

from __future__ import annotations

import os
import struct
import zlib
from collections.abc import Generator
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from app.core.bank import DcaParameterBank
from app.core.types import DimensionError, FloatArray, FormatError
from app.model.partition import Granularity, Partition

MAGIC = b"DCA1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIBHI")
_SLOTS = struct.Struct("<Q")
_FOOTER = struct.Struct("<I")


@dataclass(frozen=True)
class CheckpointHeader:
    magic: bytes
    version: int
    granularity: Granularity
    n: int
    component_count: int
    slot_counts: tuple[int, ...]
    stored_crc: int
    computed_crc: int

    @property
    def crc_ok(self) -> bool:
        return self.stored_crc == self.computed_crc

    def describe(self) -> str:
        lines = [
            f"magic:        {self.magic.decode('ascii', errors='replace')}",
            f"version:      {self.version}",
            f"granularity:  {self.granularity.value}",
            f"n:            {self.n}",
            f"components:   {self.component_count}",
            f"total slots:  {sum(self.slot_counts)}",
            f"slot counts:  {_summarize_counts(self.slot_counts)}",
            f"crc32:        {self.stored_crc:08x} "
            f"({'OK' if self.crc_ok else f'MISMATCH, computed {self.computed_crc:08x}'})",
        ]
        return "\n".join(lines)


@dataclass(frozen=True)
class CheckpointContents:
    header: CheckpointHeader
    # One [n, slot_count] array per component, in component order.
    components: tuple[FloatArray, ...]


@contextmanager
def _atomic_write(path: Path) -> Generator[BinaryIO, None, None]:
    """
    Write to a sibling temp file and rename over the target on success, so a
    crashed run never leaves a half-written checkpoint behind.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    handle = tmp.open("wb")
    try:
        yield handle
        handle.flush()
        os.fsync(handle.fileno())
        handle.close()
        os.replace(tmp, path)
    finally:
        if not handle.closed:
            handle.close()
        if tmp.exists():
            tmp.unlink()


def encode_checkpoint(
    granularity: Granularity, components: list[FloatArray] | tuple[FloatArray, ...]
) -> bytes:
    if not components:
        raise DimensionError("A checkpoint needs at least one component.")
    n = int(components[0].shape[0])
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, granularity.tag, n, len(components))]
    for arr in components:
        if arr.ndim != 2 or arr.shape[0] != n:
            raise DimensionError(f"Component array must be [{n}, slots]; got {arr.shape}.")
        chunks.append(_SLOTS.pack(arr.shape[1]))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = b"".join(chunks)
    return payload + _FOOTER.pack(zlib.crc32(payload))


def write_checkpoint(path: Path, bank: DcaParameterBank) -> Path:
    components = [bank.values[:, c.slots] for c in bank.partition.components]
    blob = encode_checkpoint(bank.granularity, components)
    with _atomic_write(path) as handle:
        handle.write(blob)
    return path


def write_single_model(path: Path, params: FloatArray) -> Path:
    blob = encode_checkpoint(Granularity.MODELWISE, [np.asarray(params, dtype=np.float64)[None, :]])
    with _atomic_write(path) as handle:
        handle.write(blob)
    return path


_Fields = tuple[bytes, int, Granularity, int, int]


def _parse(blob: bytes, body_end: int) -> tuple[_Fields, list[int], list[FloatArray]]:
    magic, version, tag, n, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"Bad checkpoint magic {magic!r}; expected {MAGIC!r}.", offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported checkpoint version {version}.", offset=4)
    try:
        granularity = Granularity.from_tag(tag)
    except IndexError:
        raise FormatError(f"Unknown granularity tag {tag}.", offset=8) from None

    offset = _HEADER.size
    slot_counts: list[int] = []
    components: list[FloatArray] = []
    for c in range(count):
        if offset + _SLOTS.size > body_end:
            raise FormatError(f"Truncated slot count for component {c}.", offset=offset)
        (slots,) = _SLOTS.unpack_from(blob, offset)
        offset += _SLOTS.size
        nbytes = n * slots * 8
        if offset + nbytes > body_end:
            raise FormatError(
                f"Truncated data for component {c}: need {nbytes} bytes.", offset=offset
            )
        arr = np.frombuffer(blob, dtype="<f8", count=n * slots, offset=offset)
        components.append(arr.astype(np.float64).reshape(n, slots))
        slot_counts.append(int(slots))
        offset += nbytes
    if offset != body_end:
        raise FormatError(
            f"{body_end - offset} unexpected trailing byte(s) before the footer.", offset=offset
        )
    return (magic, version, granularity, n, count), slot_counts, components


def decode_checkpoint(blob: bytes, *, verify_crc: bool = True) -> CheckpointContents:
    """
    The CRC is checked before any structural parsing, so a corrupted header
    or slot count reports as a CRC mismatch. With verify_crc=False a
    mismatching file whose header still parses is returned for inspection.
    """
    if len(blob) < _HEADER.size + _FOOTER.size:
        raise FormatError(
            f"Checkpoint too short ({len(blob)} bytes) for header and footer.",
            offset=len(blob),
        )
    body_end = len(blob) - _FOOTER.size
    (stored,) = _FOOTER.unpack_from(blob, body_end)
    computed = zlib.crc32(blob[:body_end])
    mismatch = f"Checkpoint CRC mismatch: stored {stored:08x}, computed {computed:08x}"
    if verify_crc and stored != computed:
        raise FormatError(mismatch + ".", offset=body_end)

    try:
        fields, slot_counts, components = _parse(blob, body_end)
    except FormatError as e:
        if stored == computed:
            raise
        raise FormatError(f"{mismatch}; header unreadable ({e})", offset=e.offset) from e

    magic, version, granularity, n, count = fields
    header = CheckpointHeader(
        magic=magic,
        version=version,
        granularity=granularity,
        n=n,
        component_count=count,
        slot_counts=tuple(slot_counts),
        stored_crc=stored,
        computed_crc=computed,
    )
    return CheckpointContents(header=header, components=tuple(components))


def read_checkpoint(path: Path, *, verify_crc: bool = True) -> CheckpointContents:
    if not path.exists():
        raise FormatError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), verify_crc=verify_crc)


def inspect_checkpoint(path: Path) -> CheckpointHeader:
    """Header dump without rejecting a bad CRC (the caller reports it)."""
    return read_checkpoint(path, verify_crc=False).header


def load_bank(path: Path, part: Partition, *, rng_seed: int = 0) -> DcaParameterBank:
    """Rebuild a bank from a checkpoint whose layout must match `part`."""
    contents = read_checkpoint(path)
    header = contents.header
    if header.granularity is not part.granularity or header.component_count != part.component_count:
        raise FormatError(
            f"Checkpoint holds {header.component_count} {header.granularity.value} "
            f"component(s); config expects {part.component_count} {part.granularity.value}."
        )
    values = np.empty((header.n, part.total_slots), dtype=np.float64)
    for comp, arr in zip(part.components, contents.components):
        if arr.shape[1] != comp.size:
            raise FormatError(
                f"Component {comp.name} has {arr.shape[1]} slots in the checkpoint; "
                f"the model defines {comp.size}."
            )
        values[:, comp.slots] = arr
    return DcaParameterBank(part, values, rng_seed=rng_seed)


def _summarize_counts(counts: tuple[int, ...]) -> str:
    if len(counts) <= 12:
        return ", ".join(str(c) for c in counts)
    head = ", ".join(str(c) for c in counts[:6])
    return f"{head}, ... ({len(counts)} components)"
