"""Zero-shot evaluation over precomputed embeddings.

The harness classifies each manifest item under three scoring modes from one
shared scoring pass:

* ``category``: cosine between pooled frames and the category embedding;
* ``pooled``: mean of the spatio and temporal pooled-descriptor cosines;
* ``od``: the fused logit (pooled + matching-flow scores averaged).

``synth_benchmark`` plants a deterministic desk-scale classification task:
unit class prototypes, per-class descriptors and per-item frames sampled as
prototype plus isotropic Gaussian noise and renormalized.  The category
embedding is a single noisy view of the prototype while descriptors give
several, which is what separates the three modes' accuracies.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ClassEntry,
    DescriptorBank,
    EmbedMatrix,
    SolverConfig,
    condition_on_category,
    load_descriptor_bank,
    read_embed_matrix,
    save_descriptor_bank,
    write_embed_matrix,
)
from .errors import ConfigurationError, OstError, ValidationError
from .matcher import category_score, load_class_embeddings, score_video

MODES = ("category", "pooled", "od")

# Noise lengths are sigma * NOISE_GAIN * sqrt(dim); the gain puts the stated
# sigmas into the regime where per-frame matches are unreliable and pooling
# or matching flow has to do the work.
NOISE_GAIN = 3.6

# Each frame leans toward one spatio element (cycling) and one temporal step
# (progressing in order) of its class, scaled by this factor: videos show
# their class's elements one at a time rather than all at once.
FRAME_ALIGNMENT = 1.0


@dataclass(frozen=True)
class EvalManifest:
    """Labelled embedding files plus the bank they are scored against."""

    bank_ref: str
    items: tuple[tuple[str, str], ...]  # (video_emb_ref, label)
    base_dir: Path

    def __post_init__(self):
        if not self.items:
            raise ValidationError("manifest has no items")


def load_manifest(source) -> EvalManifest:
    path = Path(source)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "bank" not in doc or "items" not in doc:
        raise ValidationError(f"{path}: manifest needs 'bank' and 'items'")
    items = []
    for i, item in enumerate(doc["items"]):
        if not isinstance(item, dict) or "emb" not in item or "label" not in item:
            raise ValidationError(f"{path}: items[{i}] needs 'emb' and 'label'")
        items.append((str(item["emb"]), str(item["label"])))
    return EvalManifest(bank_ref=str(doc["bank"]), items=tuple(items), base_dir=path.parent)


@dataclass(frozen=True)
class EvalResult:
    top1: float
    top5: float
    per_class_top1: dict[str, float]
    n_items: int

    def to_json_dict(self) -> dict:
        return {
            "top1": self.top1,
            "top5": self.top5,
            "per_class_top1": self.per_class_top1,
            "n_items": self.n_items,
        }


def _rank_key(breakdown, category_value: float | None, mode: str) -> float:
    if mode == "od":
        return breakdown.fused
    if mode == "pooled":
        return 0.5 * (breakdown.s_spatio_pool + breakdown.s_temporal_pool)
    if mode == "category":
        if category_value is None:
            raise ConfigurationError("category mode needs category embeddings")
        return category_value
    raise ValidationError(f"unknown scoring mode {mode!r}")


def _evaluate_scored(
    per_item_scores: list[tuple[str, np.ndarray]], class_names: list[str]
) -> EvalResult:
    hits1 = 0
    hits5 = 0
    per_class_hits: dict[str, list[int]] = {name: [0, 0] for name in class_names}
    for label, scores in per_item_scores:
        order = np.argsort(-scores, kind="stable")
        predicted = class_names[int(order[0])]
        top5 = {class_names[int(i)] for i in order[:5]}
        per_class_hits[label][1] += 1
        if predicted == label:
            hits1 += 1
            per_class_hits[label][0] += 1
        if label in top5:
            hits5 += 1
    n = len(per_item_scores)
    per_class = {
        name: (hit / total if total else 0.0)
        for name, (hit, total) in per_class_hits.items()
        if total
    }
    return EvalResult(top1=hits1 / n, top5=hits5 / n, per_class_top1=per_class, n_items=n)


def zero_shot_eval_all_modes(
    manifest: EvalManifest,
    cfg: SolverConfig,
    modes: tuple[str, ...] = MODES,
    jobs: int = 1,
) -> dict[str, EvalResult]:
    """Run every requested scoring mode from one scoring pass per item.

    Items are independent; with ``jobs > 1`` they are scored by a thread
    pool, and results are merged in manifest order either way.
    """
    bank_path = manifest.base_dir / manifest.bank_ref
    bank = load_descriptor_bank(bank_path)
    class_embs = load_class_embeddings(bank, bank_path)
    class_names = [c.name for c in class_embs]
    known = set(class_names)
    for _, label in manifest.items:
        if label not in known:
            raise ValidationError(f"item label {label!r} is not a bank class")
    need_category = "category" in modes
    if need_category and any(c.category is None for c in class_embs):
        missing = next(c.name for c in class_embs if c.category is None)
        raise ConfigurationError(f"class {missing!r} has no category embedding")

    def score_item(task):
        index, (ref, label) = task
        try:
            frames = read_embed_matrix(manifest.base_dir / ref)
            row_scores = {m: np.empty(len(class_embs)) for m in modes}
            for k, entry in enumerate(class_embs):
                breakdown = score_video(frames, entry, cfg)
                cat_value = (
                    category_score(frames, entry.category) if need_category else None
                )
                for m in modes:
                    row_scores[m][k] = _rank_key(breakdown, cat_value, m)
        except OstError as exc:
            raise type(exc)(f"item {index} ({ref}): {exc}") from exc
        except OSError as exc:
            raise OSError(f"item {index} ({ref}): {exc}") from exc
        return label, row_scores

    tasks = list(enumerate(manifest.items))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scored = list(pool.map(score_item, tasks))
    else:
        scored = [score_item(task) for task in tasks]

    per_mode = {
        m: [(label, row_scores[m]) for label, row_scores in scored] for m in modes
    }
    return {m: _evaluate_scored(per_mode[m], class_names) for m in modes}


def zero_shot_eval(manifest: EvalManifest, cfg: SolverConfig, mode: str = "od") -> EvalResult:
    """Classify every item and report top-1 / top-5 / per-class accuracy."""
    return zero_shot_eval_all_modes(manifest, cfg, modes=(mode,))[mode]


def _noise_rows(rng: np.random.Generator, count: int, dim: int, sigma: float) -> np.ndarray:
    # expected row length is sigma * NOISE_GAIN * sqrt(dim); base vectors are unit
    return sigma * NOISE_GAIN * rng.standard_normal((count, dim))


def _unit(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def synth_benchmark(
    seed: int,
    n_classes: int,
    items_per_class: int,
    dim: int,
    noise_frames: float,
    noise_desc: float,
    out_dir,
    n_desc: int = 4,
    frames_per_item: int = 8,
) -> Path:
    """Write a planted benchmark (OSTE files, bank, manifest); returns manifest path.

    Deterministic per seed: prototypes first, then per class its spatio,
    temporal, and category embeddings, then all item frame matrices.  Frames
    are the class prototype plus isotropic noise; part of that noise is the
    identity of the spatio element / temporal step the frame depicts (see
    ``FRAME_ALIGNMENT``), the rest is per-frame clutter of length
    ``noise_frames`` (scaled).  Descriptors and the category embedding are
    prototype plus isotropic noise of length ``noise_desc`` (scaled); the
    category embedding is a single such view, which is what makes it weaker
    than the pooled multi-view descriptors.
    """
    if min(n_classes, items_per_class, dim, n_desc, frames_per_item) < 1:
        raise ValidationError("all benchmark sizes must be positive")
    if noise_frames < 0 or noise_desc < 0:
        raise ValidationError("noise levels must be >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    protos = rng.standard_normal((n_classes, dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)

    entries = []
    desc_noise: list[dict[str, np.ndarray]] = []
    for k in range(n_classes):
        name = f"class_{k:02d}"
        spatio_n = _noise_rows(rng, n_desc, dim, noise_desc)
        temporal_n = _noise_rows(rng, n_desc, dim, noise_desc)
        category_n = _noise_rows(rng, 1, dim, noise_desc)
        desc_noise.append({"spatio": spatio_n, "temporal": temporal_n})
        refs = {}
        for tag, noise in (("spatio", spatio_n), ("temporal", temporal_n), ("category", category_n)):
            ref = f"{name}_{tag}.oste"
            write_embed_matrix(EmbedMatrix(_unit(protos[k] + noise), unit_norm=True), out / ref)
            refs[tag] = ref
        entries.append(
            ClassEntry(
                name=name,
                spatio_texts=tuple(f"synthetic cue {i + 1} for {name}" for i in range(n_desc)),
                temporal_texts_raw=tuple(
                    f"synthetic step {i + 1} for {name}" for i in range(n_desc)
                ),
                temporal_texts_conditioned=tuple(
                    condition_on_category(name, f"synthetic step {i + 1} for {name}")
                    for i in range(n_desc)
                ),
                spatio_emb_ref=refs["spatio"],
                temporal_emb_ref=refs["temporal"],
                category_emb_ref=refs["category"],
            )
        )
    bank = DescriptorBank(
        classes=tuple(entries),
        n_spatio=n_desc,
        n_temporal=n_desc,
        template_version="synthetic-v1",
    )
    save_descriptor_bank(bank, out / "bank.json")

    # Videos do not show every element: each item carries a random subset of
    # its class's spatio elements and a contiguous window of temporal steps.
    n_present = max(1, n_desc // 2)
    frame_idx = np.arange(frames_per_item)
    items = []
    for k in range(n_classes):
        for i in range(items_per_class):
            present = np.sort(rng.choice(n_desc, size=n_present, replace=False))
            first_step = int(rng.integers(0, n_desc - n_present + 1))
            spatio_pick = present[frame_idx % n_present]
            step_pick = first_step + (frame_idx * n_present // frames_per_item)
            aligned = FRAME_ALIGNMENT * (
                desc_noise[k]["spatio"][spatio_pick] + desc_noise[k]["temporal"][step_pick]
            )
            clutter = _noise_rows(rng, frames_per_item, dim, noise_frames)
            frames = _unit(protos[k][None, :] + aligned + clutter)
            ref = f"item_{k:02d}_{i:03d}.oste"
            write_embed_matrix(EmbedMatrix(frames, unit_norm=True), out / ref)
            items.append({"emb": ref, "label": f"class_{k:02d}"})

    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps({"bank": "bank.json", "items": items}, indent=2) + "\n", encoding="utf-8"
    )
    return manifest_path
