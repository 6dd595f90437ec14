"""Writers for the embedding-matrix and bank formats the matcher consumes.

The OSTE v1 layout: magic ``OSTE``, version u32=1, rows u32, cols u32,
flags u64 (bit 0 = unit-norm rows), then rows*cols float32 LE row-major.
Bank documents are JSON with the schema described in ``load_bank``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIIIQ")
FLAG_UNIT_NORM = 0x1


def write_matrix(values: np.ndarray, destination, unit_norm: bool) -> None:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"matrix must be 2-D and non-empty, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite entries")
    flags = FLAG_UNIT_NORM if unit_norm else 0
    header = _HEADER.pack(b"OSTE", 1, arr.shape[0], arr.shape[1], flags)
    Path(destination).write_bytes(header + arr.astype("<f4").tobytes(order="C"))


def load_bank(source) -> dict:
    """Load a descriptor bank document; validates the fields used here."""
    doc = json.loads(Path(source).read_text(encoding="utf-8"))
    if doc.get("version") != 1:
        raise ValueError(f"{source}: unsupported bank version {doc.get('version')!r}")
    for key in ("n_spatio", "n_temporal", "template_version", "classes"):
        if key not in doc:
            raise ValueError(f"{source}: missing field {key!r}")
    if not doc["classes"]:
        raise ValueError(f"{source}: no classes")
    for i, cls in enumerate(doc["classes"]):
        for key in ("name", "spatio", "temporal_raw"):
            if key not in cls:
                raise ValueError(f"{source}: classes[{i}] missing {key!r}")
    return doc


def save_bank(doc: dict, destination) -> None:
    Path(destination).write_text(
        json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
