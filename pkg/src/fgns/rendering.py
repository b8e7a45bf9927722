"""Explanation panels: query plus neighbors as one PNG strip.

Tiles are nearest-neighbor upscaled, separated by white gutters, and
optionally tinted where the predicted class's catalog masks fire so a reader
can see which regions drove the selection. Files go through the atomic
writer and carry the run's config hash as PNG text metadata.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .artifacts import atomic_write_bytes
from .errors import InputError


def _to_bytes_gray(img: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(img, dtype=np.float64) * 255.0).astype(np.uint8)


def _upscale(a: np.ndarray, scale: int) -> np.ndarray:
    return np.repeat(np.repeat(a, scale, axis=0), scale, axis=1)


def render_panel(
    query: np.ndarray,
    neighbors: list[np.ndarray],
    scale: int = 4,
    separator: int = 2,
    overlay_masks: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Compose the strip; returns (H, W) uint8, or (H, W, 3) with overlays."""
    if scale < 1 or separator < 0:
        raise InputError(f"bad scale {scale} or separator {separator}")
    if not neighbors:
        raise InputError("panel needs at least one neighbor")
    query = np.asarray(query, dtype=np.float64)
    shape = query.shape
    for nb in neighbors:
        if np.asarray(nb).shape != shape:
            raise InputError("query and neighbors must share one image shape")

    combined_mask = None
    if overlay_masks:
        combined_mask = np.zeros(shape, dtype=bool)
        for m in overlay_masks:
            if np.asarray(m).shape != shape:
                raise InputError("overlay mask shape must match the images")
            combined_mask |= np.asarray(m, dtype=bool)
        combined_mask = _upscale(combined_mask, scale)

    tiles = []
    for img in [query, *neighbors]:
        gray = _upscale(_to_bytes_gray(img), scale)
        if combined_mask is None:
            tiles.append(gray)
        else:
            g16 = gray.astype(np.int64)
            rgb = np.stack([gray, gray, gray], axis=2)
            rgb[combined_mask, 0] = ((g16[combined_mask] + 255) // 2).astype(np.uint8)
            rgb[combined_mask, 1] = (g16[combined_mask] // 2).astype(np.uint8)
            rgb[combined_mask, 2] = (g16[combined_mask] // 2).astype(np.uint8)
            tiles.append(rgb)

    h = tiles[0].shape[0]
    if combined_mask is None:
        gutter = np.full((h, separator), 255, dtype=np.uint8)
    else:
        gutter = np.full((h, separator, 3), 255, dtype=np.uint8)
    parts = []
    for i, tile in enumerate(tiles):
        if i:
            parts.append(gutter)
        parts.append(tile)
    return np.concatenate(parts, axis=1)


def save_panel(panel: np.ndarray, path: str | Path, config_hash: str) -> None:
    mode = "L" if panel.ndim == 2 else "RGB"
    image = Image.fromarray(panel, mode=mode)
    meta = PngInfo()
    meta.add_text("config_hash", config_hash)
    buf = io.BytesIO()
    image.save(buf, format="PNG", pnginfo=meta)
    atomic_write_bytes(path, buf.getvalue())
