"""Small helpers for deterministic artifact files.

Every artifact this package writes goes through :func:`atomic_write_bytes`
(write to a temp file in the target directory, then rename) so a crash never
leaves a half-written file behind. JSON artifacts are canonicalized (sorted
keys, fixed separators, trailing newline) so byte-identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_json(path: str | Path, obj: Any) -> str:
    """Write canonical JSON and return its sha256 hex digest."""
    text = canonical_json(obj)
    atomic_write_bytes(path, text.encode("utf-8"))
    return sha256_hex(text.encode("utf-8"))


def read_json(path: str | Path) -> Any:
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))
