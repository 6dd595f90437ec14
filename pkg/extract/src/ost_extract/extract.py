"""Extraction stages: descriptor texts and sampled video frames to OSTE files."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .oste import load_bank, save_bank, write_matrix

log = logging.getLogger("ost_extract")

CONDITION_TEMPLATE = "A video of {category} usually includes {raw}"

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


@dataclass(frozen=True)
class ExtractJob:
    """Paths and switches for one extraction run."""

    bank_in: str | None = None
    frames_dir: str | None = None
    out_dir: str = "."
    normalize: bool = True


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_") or "class"


def _maybe_normalize(rows: np.ndarray, normalize: bool) -> np.ndarray:
    if not normalize:
        return rows
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("encoder produced a zero-norm embedding")
    return rows / norms


def _encode_class_texts(encoder, texts: list[str], class_name: str):
    try:
        return encoder.encode_texts(texts)
    except Exception as exc:
        # find the offending item so the error is actionable
        for index, text in enumerate(texts):
            try:
                encoder.encode_texts([text])
            except Exception:
                raise ValueError(f"class {class_name!r}, text {index}: {exc}") from exc
        raise ValueError(f"class {class_name!r}: {exc}") from exc


def extract_text(bank_in, out_dir, encoder, normalize: bool = True, use_conditioned: bool = True):
    """Encode every class's descriptor texts and category name.

    Writes one OSTE file per class and kind into ``out_dir`` plus an updated
    bank (``bank.json``) whose embedding references point at them; returns
    the updated bank path.  Temporal texts are encoded in their
    category-conditioned form unless ``use_conditioned`` is off.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = load_bank(bank_in)
    for cls in doc["classes"]:
        name = cls["name"]
        slug = _slug(name)
        temporal_texts = cls.get("temporal_conditioned") or []
        if not use_conditioned or not temporal_texts:
            temporal_texts = cls["temporal_raw"]
        targets = {
            "spatio": (cls["spatio"], f"{slug}_spatio.oste"),
            "temporal": (temporal_texts, f"{slug}_temporal.oste"),
            "category": ([name], f"{slug}_category.oste"),
        }
        for kind, (texts, filename) in targets.items():
            rows = _maybe_normalize(
                np.asarray(_encode_class_texts(encoder, list(texts), name), dtype=np.float64),
                normalize,
            )
            write_matrix(rows, out / filename, unit_norm=normalize)
            cls[f"{kind}_emb" if kind != "category" else "category_emb"] = filename
    bank_out = out / "bank.json"
    save_bank(doc, bank_out)
    return bank_out


def extract_frames(frames_dir, out_dir, encoder, normalize: bool = True) -> list[dict]:
    """Encode each video directory's frames into one T x d OSTE file.

    Frame order is the lexicographic order of the image filenames.  Videos
    with an unreadable image are skipped with a warning.  Returns manifest
    fragments: ``[{"video": name, "emb": filename}]``.
    """
    src = Path(frames_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fragments = []
    for video_dir in sorted(p for p in src.iterdir() if p.is_dir()):
        frame_paths = sorted(
            p for p in video_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not frame_paths:
            log.warning("no frames in %s; skipped", video_dir)
            continue
        try:
            images = [Image.open(p) for p in frame_paths]
            rows = np.asarray(encoder.encode_images(images), dtype=np.float64)
        except (UnidentifiedImageError, OSError) as exc:
            log.warning("unreadable frame in %s (%s); video skipped", video_dir, exc)
            continue
        rows = _maybe_normalize(rows, normalize)
        filename = f"{video_dir.name}.oste"
        write_matrix(rows, out / filename, unit_norm=normalize)
        fragments.append({"video": video_dir.name, "emb": filename})
    return fragments
