"""
IDX (MNIST-style) image/label files.

Layout, big-endian:
    images: u32 magic 0x00000803, u32 count, u32 rows, u32 cols, then
            count*rows*cols unsigned bytes
    labels: u32 magic 0x00000801, u32 count, then count unsigned bytes

Pixels are scaled to [0, 1] by /255 and images flattened to rows*cols
features (the 2-D shape is kept on the Dataset for blur corruptions).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from app.core.types import FormatError
from app.data.datasets import Dataset, Split

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_IMAGES_HEADER = struct.Struct(">IIII")
_LABELS_HEADER = struct.Struct(">II")


def _read(path: Path) -> bytes:
    if not path.exists():
        raise FormatError(f"IDX file not found: {path}")
    return path.read_bytes()


def _header(blob: bytes, fmt: struct.Struct, magic: int, path: Path) -> tuple[int, ...]:
    if len(blob) < fmt.size:
        raise FormatError(
            f"{path}: {len(blob)} byte(s) is too short for the {fmt.size}-byte IDX header.",
            offset=len(blob),
        )
    fields = fmt.unpack_from(blob, 0)
    if fields[0] != magic:
        raise FormatError(
            f"{path}: bad IDX magic 0x{fields[0]:08x}, expected 0x{magic:08x}.", offset=0
        )
    return fields[1:]


def _payload(blob: bytes, start: int, length: int, path: Path) -> np.ndarray:
    if len(blob) < start + length:
        raise FormatError(
            f"{path}: truncated; expected {length} data byte(s), found {len(blob) - start}.",
            offset=len(blob),
        )
    if len(blob) > start + length:
        raise FormatError(
            f"{path}: {len(blob) - start - length} trailing byte(s) after the data.",
            offset=start + length,
        )
    return np.frombuffer(blob, dtype=np.uint8, count=length, offset=start)


def read_idx_images(path: Path) -> np.ndarray:
    """Raw uint8 images [count, rows, cols]."""
    blob = _read(path)
    count, rows, cols = _header(blob, _IMAGES_HEADER, IMAGES_MAGIC, path)
    pixels = _payload(blob, _IMAGES_HEADER.size, count * rows * cols, path)
    return pixels.reshape(count, rows, cols)


def read_idx_labels(path: Path) -> np.ndarray:
    blob = _read(path)
    (count,) = _header(blob, _LABELS_HEADER, LABELS_MAGIC, path)
    return _payload(blob, _LABELS_HEADER.size, count, path)


def load_idx(
    images_path: Path,
    labels_path: Path,
    *,
    split: Split = "train",
    class_count: int | None = None,
) -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"Image/label count mismatch: {images_path} holds {images.shape[0]} image(s), "
            f"{labels_path} holds {labels.shape[0]} label(s)."
        )
    count, rows, cols = images.shape
    return Dataset(
        inputs=images.reshape(count, rows * cols).astype(np.float64) / 255.0,
        labels=labels.astype(np.int64),
        class_count=class_count or max(int(labels.max()) + 1, 2),
        split=split,
        provenance=f"idx:{images_path}",
        image_shape=(rows, cols),
    )


def write_idx(images_path: Path, labels_path: Path, images: np.ndarray, labels: np.ndarray) -> None:
    """Inverse of load_idx for raw uint8 arrays ([count, rows, cols] and [count])."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3:
        raise FormatError(f"IDX images must be [count, rows, cols]; got shape {images.shape}.")
    if labels.shape != (images.shape[0],):
        raise FormatError(
            f"Image/label count mismatch: {images.shape[0]} image(s), {labels.size} label(s)."
        )
    images_path.parent.mkdir(parents=True, exist_ok=True)
    labels_path.parent.mkdir(parents=True, exist_ok=True)
    images_path.write_bytes(_IMAGES_HEADER.pack(IMAGES_MAGIC, *images.shape) + images.tobytes())
    labels_path.write_bytes(_LABELS_HEADER.pack(LABELS_MAGIC, labels.size) + labels.tobytes())
