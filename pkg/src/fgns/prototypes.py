"""Class prototypes: the pixel-wise median over a class's training images.

The median makes the prototype robust to outlier instances; a minority of
corrupted sources cannot drag any pixel past the values the majority holds.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .artifacts import atomic_write_bytes, canonical_json
from .data import LabeledDataset
from .errors import FormatError, InputError, InsufficientDataError

PROTO_FORMAT = "fgns-prototypes"
PROTO_VERSION = 1


def prototype(images: np.ndarray) -> np.ndarray:
    """Pixel-wise median of (n, h, w) images; even counts use the midpoint."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[0] < 1:
        raise InsufficientDataError("prototype needs at least one image")
    return np.median(images, axis=0)


def build_prototypes(
    ds: LabeledDataset, classes: list[int] | None = None
) -> dict[int, np.ndarray]:
    if classes is None:
        classes = ds.classes()
    out: dict[int, np.ndarray] = {}
    for c in classes:
        rows = np.flatnonzero(ds.labels == c)
        if rows.size == 0:
            raise InsufficientDataError(f"class {c} has no instances in {ds.split} split")
        out[int(c)] = prototype(ds.images[rows])
    return out


def save_prototypes(
    protos: dict[int, np.ndarray], path: str | Path, dataset_checksum: str
) -> None:
    shapes = {tuple(p.shape) for p in protos.values()}
    if len(shapes) > 1:
        raise InputError(f"prototypes disagree on image shape: {sorted(shapes)}")
    (shape,) = shapes
    payload = {
        "format": PROTO_FORMAT,
        "version": PROTO_VERSION,
        "dataset_checksum": dataset_checksum,
        "image_shape": list(shape),
        "classes": {
            str(c): base64.b64encode(
                np.ascontiguousarray(p, dtype="<f8").tobytes()
            ).decode("ascii")
            for c, p in protos.items()
        },
    }
    atomic_write_bytes(path, canonical_json(payload).encode("utf-8"))


def load_prototypes(path: str | Path) -> tuple[dict[int, np.ndarray], str]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"prototypes file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != PROTO_FORMAT:
        raise FormatError(f"{path} is not a {PROTO_FORMAT} file")
    try:
        h, w = (int(v) for v in doc["image_shape"])
        out: dict[int, np.ndarray] = {}
        for key, blob in doc["classes"].items():
            raw = base64.b64decode(blob, validate=True)
            arr = np.frombuffer(raw, dtype="<f8")
            if arr.size != h * w:
                raise FormatError(f"{path}: prototype {key} has {arr.size} values, need {h * w}")
            out[int(key)] = arr.reshape(h, w).astype(np.float64)
        return out, str(doc["dataset_checksum"])
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed field: {exc}") from exc
