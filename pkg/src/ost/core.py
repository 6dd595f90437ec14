"""Domain types and serialization.

Embedding matrices travel between tools in the "OSTE v1" binary format:

    offset  size  field
    0       4     magic ``OSTE`` (0x4F 0x53 0x54 0x45)
    4       4     version, u32 little-endian, currently 1
    8       4     rows, u32 LE
    12      4     cols, u32 LE
    16      8     flags, u64 LE (bit 0 = rows are unit-norm; rest reserved)
    24      ...   rows*cols IEEE-754 float32 LE, row-major

Payload precision is 32-bit on disk; everything in memory is float64 so the
solver stays stable at small regularization weights.

Descriptor banks are JSON documents; see ``load_descriptor_bank`` for the
schema.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

OSTE_MAGIC = b"OSTE"
OSTE_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")  # magic, version, rows, cols, flags

FLAG_UNIT_NORM = 0x1

UNIT_NORM_TOL = 1e-4


def _as_readonly_f64(data) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EmbedMatrix:
    """A rows x dim matrix of embeddings (video frames, descriptors, ...).

    Immutable after construction; ``data`` is a read-only float64 array.
    """

    data: np.ndarray
    unit_norm: bool = False

    def __post_init__(self):
        arr = _as_readonly_f64(self.data)
        if arr.ndim != 2:
            raise ValidationError(f"embedding matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"embedding matrix needs rows >= 1 and dim >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("embedding matrix contains non-finite entries")
        if self.unit_norm:
            norms = np.linalg.norm(arr, axis=1)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > UNIT_NORM_TOL:
                raise ValidationError(
                    f"unit_norm is set but a row norm deviates from 1 by {worst:.3g}"
                )
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Marginals:
    """Strictly positive probability vectors over rows (mu) and columns (nu)."""

    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        for name, vec in (("mu", self.mu), ("nu", self.nu)):
            arr = _as_readonly_f64(vec).reshape(-1)
            arr.setflags(write=False)
            if arr.size < 1:
                raise ValidationError(f"{name} must be non-empty")
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
                raise ValidationError(f"{name} must be strictly positive and finite")
            if abs(float(arr.sum()) - 1.0) > 1e-9:
                raise ValidationError(f"{name} must sum to 1 within 1e-9, got {arr.sum()!r}")
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, t: int, n: int) -> "Marginals":
        return cls(np.full(t, 1.0 / t), np.full(n, 1.0 / n))


@dataclass(frozen=True)
class SolverConfig:
    """Entropic OT solver settings; defaults reproduce the reference setup."""

    lam: float = 0.1
    max_iter: int = 100
    thresh: float = 1e-2

    def __post_init__(self):
        if not (self.lam > 0):
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not (self.thresh > 0):
            raise ValidationError(f"thresh must be > 0, got {self.thresh}")


@dataclass(frozen=True)
class LossConfig:
    """Contrastive-loss settings (softmax temperature)."""

    tau: float = 0.01

    def __post_init__(self):
        if not (self.tau > 0):
            raise ValidationError(f"tau must be > 0, got {self.tau}")


# ---------------------------------------------------------------------------
# OSTE read/write


def write_embed_matrix(m: EmbedMatrix, destination) -> None:
    """Write ``m`` to ``destination`` in OSTE v1 (float32 payload)."""
    path = Path(destination)
    flags = FLAG_UNIT_NORM if m.unit_norm else 0
    header = _HEADER.pack(OSTE_MAGIC, OSTE_VERSION, m.rows, m.dim, flags)
    payload = np.asarray(m.data, dtype="<f4").tobytes(order="C")
    try:
        path.write_bytes(header + payload)
    except OSError as exc:
        raise OSError(f"cannot write embedding matrix to {path}: {exc}") from exc


def read_embed_matrix(source) -> EmbedMatrix:
    """Read an OSTE v1 file; exact inverse of :func:`write_embed_matrix`."""
    path = Path(source)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, rows, cols, flags = _HEADER.unpack_from(blob)
    if magic != OSTE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != OSTE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: invalid dimensions {rows}x{cols}")
    expected = rows * cols * 4
    got = len(blob) - _HEADER.size
    if got < expected:
        raise FormatError(f"{path}: truncated payload ({got} bytes, need {expected})")
    if got > expected:
        raise FormatError(f"{path}: oversized payload ({got} bytes, need {expected})")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(rows, cols)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: payload contains non-finite floats")
    return EmbedMatrix(values.astype(np.float64), unit_norm=bool(flags & FLAG_UNIT_NORM))


# ---------------------------------------------------------------------------
# Descriptor bank

CONDITION_TEMPLATE = "A video of {category} usually includes {raw}"


def condition_on_category(category: str, raw: str) -> str:
    """Prefix a step description with its action category."""
    return CONDITION_TEMPLATE.format(category=category, raw=raw)


@dataclass(frozen=True)
class ClassEntry:
    """Per-class descriptor texts plus optional embedding file references."""

    name: str
    spatio_texts: tuple[str, ...]
    temporal_texts_raw: tuple[str, ...]
    temporal_texts_conditioned: tuple[str, ...] = ()
    spatio_emb_ref: str | None = None
    temporal_emb_ref: str | None = None
    category_emb_ref: str | None = None


@dataclass(frozen=True)
class DescriptorBank:
    """An ordered set of class entries with fixed descriptor counts."""

    classes: tuple[ClassEntry, ...]
    n_spatio: int
    n_temporal: int
    template_version: str = "body-v1"

    def __post_init__(self):
        if not self.classes:
            raise ValidationError("no classes")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise ValidationError(f"duplicate class name {dup!r}")
        for entry in self.classes:
            if len(entry.spatio_texts) != self.n_spatio:
                raise ValidationError(
                    f"class {entry.name!r}: expected {self.n_spatio} spatio texts, "
                    f"got {len(entry.spatio_texts)}"
                )
            if len(entry.temporal_texts_raw) != self.n_temporal:
                raise ValidationError(
                    f"class {entry.name!r}: expected {self.n_temporal} temporal texts, "
                    f"got {len(entry.temporal_texts_raw)}"
                )
            cond = entry.temporal_texts_conditioned
            if cond and len(cond) != self.n_temporal:
                raise ValidationError(
                    f"class {entry.name!r}: conditioned list length {len(cond)} "
                    f"does not match n_temporal={self.n_temporal}"
                )
            for raw, got in zip(entry.temporal_texts_raw, cond):
                want = condition_on_category(entry.name, raw)
                if got != want:
                    raise ValidationError(
                        f"class {entry.name!r}: conditioned text {got!r} does not "
                        f"match the conditioning template"
                    )

    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]


def bank_to_json_dict(bank: DescriptorBank) -> dict:
    return {
        "version": 1,
        "n_spatio": bank.n_spatio,
        "n_temporal": bank.n_temporal,
        "template_version": bank.template_version,
        "classes": [
            {
                "name": c.name,
                "spatio": list(c.spatio_texts),
                "temporal_raw": list(c.temporal_texts_raw),
                "temporal_conditioned": list(c.temporal_texts_conditioned),
                "spatio_emb": c.spatio_emb_ref,
                "temporal_emb": c.temporal_emb_ref,
                "category_emb": c.category_emb_ref,
            }
            for c in bank.classes
        ],
    }


def save_descriptor_bank(bank: DescriptorBank, destination) -> None:
    """Write the bank as canonical JSON (stable bytes for identical banks)."""
    text = json.dumps(bank_to_json_dict(bank), indent=2, ensure_ascii=False) + "\n"
    Path(destination).write_text(text, encoding="utf-8")


def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ValidationError(f"{where}: missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise ValidationError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _str_list(doc: dict, key: str, where: str) -> list[str]:
    value = _require(doc, key, list, where)
    if not all(isinstance(s, str) for s in value):
        raise ValidationError(f"{where}: field {key!r} must be a list of strings")
    return value


def _opt_str(doc: dict, key: str, where: str) -> str | None:
    value = doc.get(key)
    if value is not None and not isinstance(value, str):
        raise ValidationError(f"{where}: field {key!r} must be a string or null")
    return value


def load_descriptor_bank(source) -> DescriptorBank:
    """Load and validate a descriptor bank JSON document.

    Schema: ``{"version": 1, "n_spatio": int, "n_temporal": int,
    "template_version": str, "classes": [{"name", "spatio", "temporal_raw",
    "temporal_conditioned", "spatio_emb", "temporal_emb", "category_emb"}]}``
    """
    path = Path(source)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    version = _require(doc, "version", int, str(path))
    if version != 1:
        raise ValidationError(f"{path}: unsupported bank version {version}")
    n_spatio = _require(doc, "n_spatio", int, str(path))
    n_temporal = _require(doc, "n_temporal", int, str(path))
    template_version = _require(doc, "template_version", str, str(path))
    raw_classes = _require(doc, "classes", list, str(path))
    entries = []
    for i, cls in enumerate(raw_classes):
        if not isinstance(cls, dict):
            raise ValidationError(f"{path}: classes[{i}] must be an object")
        where = f"{path}: classes[{i}]"
        name = _require(cls, "name", str, where)
        entries.append(
            ClassEntry(
                name=name,
                spatio_texts=tuple(_str_list(cls, "spatio", where)),
                temporal_texts_raw=tuple(_str_list(cls, "temporal_raw", where)),
                temporal_texts_conditioned=tuple(_str_list(cls, "temporal_conditioned", where)),
                spatio_emb_ref=_opt_str(cls, "spatio_emb", where),
                temporal_emb_ref=_opt_str(cls, "temporal_emb", where),
                category_emb_ref=_opt_str(cls, "category_emb", where),
            )
        )
    return DescriptorBank(
        classes=tuple(entries),
        n_spatio=n_spatio,
        n_temporal=n_temporal,
        template_version=template_version,
    )
