"""IDX dataset ingestion.

Reads the classic big-endian IDX image/label files (plain or gzip), exposes
them as float64 arrays in [0, 1], and provides the class filtering and seeded
per-class sampling the rest of the pipeline builds on. Every image keeps the
integer id it had in its source file, so artifacts can cite training
instances stably across filtered views.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, FormatError, InputError, InsufficientDataError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
GZIP_PREFIX = b"\x1f\x8b"


@dataclass(frozen=True)
class LabeledDataset:
    """Images with labels, original ids, a split tag, and a source checksum."""

    images: np.ndarray  # (n, h, w) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64
    ids: np.ndarray  # (n,) int64, row index in the source file
    split: str
    checksum: str

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_shape(self) -> tuple[int, int]:
        return int(self.images.shape[1]), int(self.images.shape[2])

    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    def subset(self, index: np.ndarray) -> "LabeledDataset":
        return replace(
            self, images=self.images[index], labels=self.labels[index], ids=self.ids[index]
        )

    def filter_classes(self, classes: list[int]) -> "LabeledDataset":
        if not classes:
            raise DegenerateInputError("class filter must name at least one class")
        present = set(self.classes())
        missing = [c for c in classes if c not in present]
        if missing:
            raise InputError(f"classes not present in {self.split} split: {missing}")
        mask = np.isin(self.labels, np.asarray(classes, dtype=np.int64))
        return self.subset(np.flatnonzero(mask))

    def row_for_id(self, image_id: int) -> int:
        rows = np.flatnonzero(self.ids == image_id)
        if rows.size == 0:
            raise InputError(f"unknown image id {image_id} in {self.split} split")
        return int(rows[0])


def _read_raw(path: str | Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise InputError(f"dataset file not found: {path}")
    data = path.read_bytes()
    if data[:2] == GZIP_PREFIX:
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise FormatError(f"cannot decompress {path}: {exc}") from exc
    return data


def parse_idx_images(data: bytes, source: str) -> np.ndarray:
    if len(data) < 16:
        raise FormatError(f"{source}: header truncated ({len(data)} bytes)")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGES_MAGIC:
        raise FormatError(f"{source}: expected image magic {IMAGES_MAGIC}, got {magic}")
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise FormatError(f"{source}: expected {expected} bytes, got {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows, cols).astype(np.float64) / 255.0


def parse_idx_labels(data: bytes, source: str) -> np.ndarray:
    if len(data) < 8:
        raise FormatError(f"{source}: header truncated ({len(data)} bytes)")
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABELS_MAGIC:
        raise FormatError(f"{source}: expected label magic {LABELS_MAGIC}, got {magic}")
    if len(data) != 8 + count:
        raise FormatError(f"{source}: expected {8 + count} bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx_images(path: str | Path) -> np.ndarray:
    return parse_idx_images(_read_raw(path), source=str(path))


def load_idx_labels(path: str | Path) -> np.ndarray:
    return parse_idx_labels(_read_raw(path), source=str(path))


def load_dataset(images_path: str | Path, labels_path: str | Path, split: str) -> LabeledDataset:
    raw_images = _read_raw(images_path)
    raw_labels = _read_raw(labels_path)
    images = parse_idx_images(raw_images, source=str(images_path))
    labels = parse_idx_labels(raw_labels, source=str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise InputError(
            f"{images_path} has {images.shape[0]} images but "
            f"{labels_path} has {labels.shape[0]} labels"
        )
    checksum = hashlib.sha256(raw_images + raw_labels).hexdigest()
    ids = np.arange(images.shape[0], dtype=np.int64)
    return LabeledDataset(images=images, labels=labels, ids=ids, split=split, checksum=checksum)


def sample_class(ds: LabeledDataset, cls: int, n: int, seed: int) -> LabeledDataset:
    """Draw n distinct instances of one class, deterministically in seed.

    The draw is without replacement; asking for more instances than the class
    holds is an error rather than a silent truncation.
    """
    pool = np.flatnonzero(ds.labels == cls)
    if pool.size < n:
        raise InsufficientDataError(
            f"class {cls} has {pool.size} instances in {ds.split} split, need {n}"
        )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, cls])))
    chosen = rng.choice(pool, size=n, replace=False)
    return ds.subset(np.sort(chosen))
