"""Similarity scoring between a video and per-class descriptor sets.

Four scores are produced per class and averaged into the fused logit:

* pooled scores: cosine between the mean-pooled frames and the mean-pooled
  spatio / temporal descriptors;
* matching-flow scores: the transport-plan-weighted sum of pairwise frame
  vs descriptor cosines, one plan per descriptor kind, solved with uniform
  marginals.

All scores are invariant to row permutation and to positive per-row scaling
of the embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DescriptorBank, EmbedMatrix, Marginals, SolverConfig, read_embed_matrix
from .errors import ConfigurationError, DegenerateInputError, OstError, ValidationError
from .sinkhorn import TransportPlan, build_cost_matrix, cosine_matrix, sinkhorn_solve

_SCORE_TOL = 1e-9


@dataclass(frozen=True)
class ScoreBreakdown:
    """The four per-class similarity scores and their fused mean."""

    s_spatio_pool: float
    s_temporal_pool: float
    s_spatio_ot: float
    s_temporal_ot: float
    fused: float
    class_name: str

    def __post_init__(self):
        parts = (self.s_spatio_pool, self.s_temporal_pool, self.s_spatio_ot, self.s_temporal_ot)
        for value in parts + (self.fused,):
            if not np.isfinite(value):
                raise ValidationError(f"non-finite score for class {self.class_name!r}")
            if abs(value) > 1.0 + _SCORE_TOL:
                raise ValidationError(
                    f"score {value!r} outside [-1, 1] for class {self.class_name!r}"
                )
        if abs(self.fused - sum(parts) / 4.0) > _SCORE_TOL:
            raise ValidationError("fused score is not the mean of its four components")

    def as_dict(self) -> dict:
        return {
            "class": self.class_name,
            "spatio_pool": self.s_spatio_pool,
            "temporal_pool": self.s_temporal_pool,
            "spatio_ot": self.s_spatio_ot,
            "temporal_ot": self.s_temporal_ot,
            "fused": self.fused,
        }


@dataclass(frozen=True)
class ClassLogits:
    """Fused scores for every bank class; argmax breaks ties at lowest index."""

    scores: tuple[ScoreBreakdown, ...]
    argmax_index: int

    def top_k_names(self, k: int) -> list[str]:
        fused = np.array([s.fused for s in self.scores])
        # stable sort keeps the lowest class index first among exact ties
        order = np.argsort(-fused, kind="stable")
        return [self.scores[i].class_name for i in order[:k]]

    def to_json_dict(self, video: str) -> dict:
        return {
            "video": video,
            "top1": self.scores[self.argmax_index].class_name,
            "top5": self.top_k_names(5),
            "scores": [s.as_dict() for s in self.scores],
        }


def _cos(u: np.ndarray, v: np.ndarray, what: str) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError(f"zero-norm {what} vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _mean_direction(rows: np.ndarray, what: str) -> np.ndarray:
    # pool directions, not raw vectors, so positive per-row scaling cancels
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError(f"zero-norm {what} row {int(np.argmin(norms))}")
    return (rows / norms[:, None]).mean(axis=0)


def category_score(v: EmbedMatrix, cat: EmbedMatrix) -> float:
    """Cosine between the mean-pooled frame directions and the category embedding."""
    if v.dim != cat.dim:
        raise ValidationError(f"dimension mismatch: frames {v.dim}, category {cat.dim}")
    if cat.rows != 1:
        raise ValidationError(f"category embedding must be a single row, got {cat.rows}")
    return _cos(_mean_direction(v.data, "frame"), cat.data[0], "pooled frame")


def pooled_score(v: EmbedMatrix, d_emb: EmbedMatrix) -> float:
    """Cosine between the mean-pooled frame and descriptor directions."""
    if v.dim != d_emb.dim:
        raise ValidationError(f"dimension mismatch: frames {v.dim}, descriptors {d_emb.dim}")
    pooled_v = _mean_direction(v.data, "frame")
    pooled_d = _mean_direction(d_emb.data, "descriptor")
    if np.linalg.norm(pooled_v) == 0.0:
        raise DegenerateInputError("zero-norm pooled frame vector")
    if np.linalg.norm(pooled_d) == 0.0:
        raise DegenerateInputError("zero-norm pooled descriptor vector")
    return _cos(pooled_v, pooled_d, "pooled")


def ot_score(v: EmbedMatrix, d_emb: EmbedMatrix, plan: TransportPlan) -> float:
    """Plan-weighted sum of pairwise cosines (Frobenius inner product)."""
    if plan.values.shape != (v.rows, d_emb.rows):
        raise ValidationError(
            f"plan shape {plan.values.shape} does not match ({v.rows}, {d_emb.rows})"
        )
    sims = cosine_matrix(v.data, d_emb.data, "frame", "descriptor")
    return float((plan.values * sims).sum())


def od_fused_logit(
    s_spatio_pool: float, s_temporal_pool: float, s_spatio_ot: float, s_temporal_ot: float
) -> float:
    """Arithmetic mean of the four component scores."""
    parts = (s_spatio_pool, s_temporal_pool, s_spatio_ot, s_temporal_ot)
    if not all(np.isfinite(p) for p in parts):
        raise ValidationError("fused logit requires four finite scores")
    return sum(parts) / 4.0


@dataclass(frozen=True)
class ClassEmbeddings:
    """Loaded embedding matrices for one bank class."""

    name: str
    spatio: EmbedMatrix
    temporal: EmbedMatrix
    category: EmbedMatrix | None = None


def load_class_embeddings(bank: DescriptorBank, bank_path) -> list[ClassEmbeddings]:
    """Resolve every entry's embedding refs relative to the bank file."""
    base = Path(bank_path).parent
    loaded = []
    for entry in bank.classes:
        if entry.spatio_emb_ref is None or entry.temporal_emb_ref is None:
            raise ConfigurationError(f"class {entry.name!r} is missing embedding references")
        spatio = read_embed_matrix(base / entry.spatio_emb_ref)
        temporal = read_embed_matrix(base / entry.temporal_emb_ref)
        category = None
        if entry.category_emb_ref is not None:
            category = read_embed_matrix(base / entry.category_emb_ref)
        loaded.append(ClassEmbeddings(entry.name, spatio, temporal, category))
    return loaded


def _pool_with_category(d_emb: EmbedMatrix, category: EmbedMatrix | None) -> EmbedMatrix:
    if category is None:
        raise ConfigurationError("include_category_in_pool requires a category embedding")
    return EmbedMatrix(np.vstack([d_emb.data, category.data]))


def score_video(
    v: EmbedMatrix,
    entry: ClassEmbeddings,
    cfg: SolverConfig,
    include_category_in_pool: bool = False,
) -> ScoreBreakdown:
    """Full score breakdown of one video against one class.

    Solves one transport problem per descriptor kind with uniform marginals;
    ``include_category_in_pool`` appends the category embedding as an extra
    row before mean pooling (the matching-flow path is unaffected).
    """
    try:
        spatio_pool_src = entry.spatio
        temporal_pool_src = entry.temporal
        if include_category_in_pool:
            spatio_pool_src = _pool_with_category(entry.spatio, entry.category)
            temporal_pool_src = _pool_with_category(entry.temporal, entry.category)
        s_sp = pooled_score(v, spatio_pool_src)
        s_tp = pooled_score(v, temporal_pool_src)

        cost_s = build_cost_matrix(v, entry.spatio)
        cost_t = build_cost_matrix(v, entry.temporal)
        plan_s = sinkhorn_solve(cost_s, Marginals.uniform(v.rows, entry.spatio.rows), cfg)
        plan_t = sinkhorn_solve(cost_t, Marginals.uniform(v.rows, entry.temporal.rows), cfg)
        s_so = ot_score(v, entry.spatio, plan_s)
        s_to = ot_score(v, entry.temporal, plan_t)
    except OstError as exc:
        raise type(exc)(f"class {entry.name!r}: {exc}") from exc
    return ScoreBreakdown(
        s_spatio_pool=s_sp,
        s_temporal_pool=s_tp,
        s_spatio_ot=s_so,
        s_temporal_ot=s_to,
        fused=od_fused_logit(s_sp, s_tp, s_so, s_to),
        class_name=entry.name,
    )


def classify(
    v: EmbedMatrix,
    class_embs: list[ClassEmbeddings],
    cfg: SolverConfig,
    include_category_in_pool: bool = False,
) -> ClassLogits:
    """Score every class and pick the argmax of the fused logits."""
    if not class_embs:
        raise ConfigurationError("classify needs at least one class")
    scores = tuple(
        score_video(v, entry, cfg, include_category_in_pool) for entry in class_embs
    )
    fused = np.array([s.fused for s in scores])
    return ClassLogits(scores=scores, argmax_index=int(np.argmax(fused)))
