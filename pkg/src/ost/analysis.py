"""Semantic-density audit and weight-space ensembling.

Semantic density of a set of embeddings is the mean cosine similarity over
all unordered distinct row pairs; higher means the set is packed tighter in
latent space and therefore harder to tell apart.  Self-pairs are excluded,
otherwise every set gets the same +1 inflation.

Weight-space ensembling blends two parameter sets elementwise:
``alpha * pretrained + (1 - alpha) * finetuned``.  Alpha weights the
pretrained side; callers wanting the opposite convention can swap the
arguments (the blend at ``1 - alpha`` with swapped arguments is identical).

Parameter sets travel in the "OSTP v1" container: magic ``OSTP``, version
u32=1, entry count u32; per entry a u16 name length, the UTF-8 name, rows
u32, cols u32, and a float32 LE row-major payload.  1-D parameters are
stored as rows x 1.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import EmbedMatrix
from .errors import DegenerateInputError, FormatError, ValidationError

OSTP_MAGIC = b"OSTP"
OSTP_VERSION = 1
_OSTP_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True)
class ParamSet:
    """Ordered mapping of parameter name to a 2-D float64 matrix."""

    params: dict[str, np.ndarray]

    def __post_init__(self):
        cleaned: dict[str, np.ndarray] = {}
        for name, value in self.params.items():
            arr = np.ascontiguousarray(value, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            if arr.ndim != 2:
                raise ValidationError(f"parameter {name!r} must be 1-D or 2-D, got {arr.ndim}-D")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"parameter {name!r} contains non-finite entries")
            arr.setflags(write=False)
            cleaned[name] = arr
        object.__setattr__(self, "params", cleaned)

    def names(self) -> list[str]:
        return list(self.params)


@dataclass(frozen=True)
class DensityReport:
    n_items: int
    mean_pairwise_cosine: float
    min: float
    max: float

    def to_json_dict(self) -> dict:
        return {
            "n": self.n_items,
            "mean": self.mean_pairwise_cosine,
            "min": self.min,
            "max": self.max,
        }


def mean_pairwise_cosine(e: EmbedMatrix) -> DensityReport:
    """Average cosine over all C(rows, 2) unordered distinct row pairs."""
    if e.rows < 2:
        raise ValidationError(f"need at least 2 rows, got {e.rows}")
    norms = np.linalg.norm(e.data, axis=1)
    if np.any(norms == 0.0):
        row = int(np.argmin(norms))
        raise DegenerateInputError(f"zero-norm row {row}")
    unit = e.data / norms[:, None]
    gram = np.clip(unit @ unit.T, -1.0, 1.0)
    iu = np.triu_indices(e.rows, k=1)
    pair_cos = gram[iu]
    return DensityReport(
        n_items=e.rows,
        mean_pairwise_cosine=float(pair_cos.mean()),
        min=float(pair_cos.min()),
        max=float(pair_cos.max()),
    )


def pool_rows(mats: list[EmbedMatrix]) -> EmbedMatrix:
    """One mean-pooled row per input matrix (row directions averaged)."""
    if not mats:
        raise ValidationError("need at least one matrix to pool")
    dims = {m.dim for m in mats}
    if len(dims) != 1:
        raise ValidationError(f"pooling needs a common dim, got {sorted(dims)}")
    pooled = []
    for m in mats:
        norms = np.linalg.norm(m.data, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateInputError(f"zero-norm row {int(np.argmin(norms))}")
        pooled.append((m.data / norms[:, None]).mean(axis=0))
    return EmbedMatrix(np.vstack(pooled))


def density_delta(category_emb: EmbedMatrix, descriptor_emb: EmbedMatrix) -> tuple[float, float]:
    """Density before (category names) and after (pooled descriptors).

    ``descriptor_emb`` holds one row per class: the mean of that class's
    descriptor embeddings (see :func:`pool_rows`).
    """
    before = mean_pairwise_cosine(category_emb).mean_pairwise_cosine
    after = mean_pairwise_cosine(descriptor_emb).mean_pairwise_cosine
    return before, after


def weight_space_ensemble(pretrained: ParamSet, finetuned: ParamSet, alpha: float) -> ParamSet:
    """Elementwise blend ``alpha * pretrained + (1 - alpha) * finetuned``."""
    if not (0.0 <= alpha <= 1.0):
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    if pretrained.names() != finetuned.names():
        missing = set(pretrained.names()) ^ set(finetuned.names())
        first = sorted(missing)[0] if missing else "(ordering differs)"
        raise ValidationError(f"parameter name sets differ; first offender: {first}")
    blended = {}
    for name, p in pretrained.params.items():
        f = finetuned.params[name]
        if p.shape != f.shape:
            raise ValidationError(
                f"parameter {name!r} shape mismatch: {p.shape} vs {f.shape}"
            )
        blended[name] = alpha * p + (1.0 - alpha) * f
    return ParamSet(blended)


def write_param_set(ps: ParamSet, destination) -> None:
    """Write ``ps`` to OSTP v1 (float32 payloads)."""
    chunks = [_OSTP_HEADER.pack(OSTP_MAGIC, OSTP_VERSION, len(ps.params))]
    for name, arr in ps.params.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValidationError(f"parameter name too long: {name[:32]!r}...")
        rows, cols = arr.shape
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<II", rows, cols))
        chunks.append(np.asarray(arr, dtype="<f4").tobytes(order="C"))
    Path(destination).write_bytes(b"".join(chunks))


def read_param_set(source) -> ParamSet:
    """Read an OSTP v1 file; exact inverse of :func:`write_param_set`."""
    path = Path(source)
    blob = path.read_bytes()
    if len(blob) < _OSTP_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, count = _OSTP_HEADER.unpack_from(blob)
    if magic != OSTP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != OSTP_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = _OSTP_HEADER.size
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(blob):
            raise FormatError(f"{path}: truncated entry name length")
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + name_len + 8 > len(blob):
            raise FormatError(f"{path}: truncated entry header")
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        nbytes = rows * cols * 4
        if offset + nbytes > len(blob):
            raise FormatError(f"{path}: truncated payload for {name!r}")
        values = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset)
        offset += nbytes
        if name in params:
            raise FormatError(f"{path}: duplicate parameter name {name!r}")
        params[name] = values.reshape(rows, cols).astype(np.float64)
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return ParamSet(params)
