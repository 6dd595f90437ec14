"""Contrastive training objective over batch logits.

Logits live in a (K, B, B) tensor: channel k holds the score between anchor
sample i and candidate sample j.  Per channel, a temperature softmax over
candidates turns row i into a distribution; averaging the K channel
distributions gives the model distribution p_i.  The loss is the KL
divergence from p to a row-stochastic target q,

    KL(q || p) = sum_j q_j log(q_j / p_j),

averaged over batch rows and over the two matching directions
(video-to-text and text-to-video).  The target sits in the numerator so the
gradient pulls p toward q, the standard contrastive behaviour; the literal
reverse order is available behind ``swap_kl`` for ablation.

``loss_grad_logits`` returns the closed-form derivative of the one-direction
loss with respect to every raw logit; transport plans feeding the logits are
treated as constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

_P_CLAMP = 1e-12


@dataclass(frozen=True)
class BatchLogits:
    """(K, B, B) raw scores: values[k, i, j] between anchor i and candidate j."""

    values: np.ndarray
    direction: str  # "v2t" or "t2v"
    tau: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValidationError(f"logits must have shape (K, B, B), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("logits need K >= 1 and B >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("logits must be finite")
        if self.direction not in ("v2t", "t2v"):
            raise ValidationError(f"direction must be 'v2t' or 't2v', got {self.direction!r}")
        if not (self.tau > 0):
            raise ValidationError(f"tau must be > 0, got {self.tau}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def batch_size(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TargetDistribution:
    """B x B row-stochastic ground-truth similarity matrix."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"target must be square, got shape {arr.shape}")
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise ValidationError("target entries must be finite and >= 0")
        row_sums = arr.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > 1e-9:
            raise ValidationError("target rows must sum to 1 within 1e-9")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def make_targets(labels: Sequence) -> TargetDistribution:
    """Multi-positive targets: mass split evenly over same-label samples."""
    labels = list(labels)
    b = len(labels)
    if b < 1:
        raise ValidationError("need at least one label")
    q = np.zeros((b, b))
    for i, li in enumerate(labels):
        positives = [j for j, lj in enumerate(labels) if lj == li]
        q[i, positives] = 1.0 / len(positives)
    return TargetDistribution(q)


def t2v_from_v2t(l: BatchLogits) -> BatchLogits:
    """Swap anchor/candidate roles: transpose each channel, flip direction."""
    flipped = "t2v" if l.direction == "v2t" else "v2t"
    return BatchLogits(np.transpose(l.values, (0, 2, 1)), flipped, l.tau)


def _channel_softmax(l: BatchLogits) -> np.ndarray:
    # softmax over the candidate axis, guarded against overflow
    scaled = l.values / l.tau
    scaled = scaled - scaled.max(axis=2, keepdims=True)
    ex = np.exp(scaled)
    return ex / ex.sum(axis=2, keepdims=True)


def softmax_scores(l: BatchLogits) -> np.ndarray:
    """B x B model distribution: channel softmaxes averaged over channels."""
    return _channel_softmax(l).mean(axis=0)


def kl_div(p: np.ndarray, q: np.ndarray) -> float:
    """KL(q || p) = sum q log(q / p); p is clamped below at 1e-12."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.size != q.size:
        raise ValidationError(f"length mismatch: {p.size} vs {q.size}")
    p_safe = np.maximum(p, _P_CLAMP)
    mask = q > 0.0
    return float((q[mask] * (np.log(q[mask]) - np.log(p_safe[mask]))).sum())


def _directional_loss(l: BatchLogits, q: TargetDistribution, swap_kl: bool) -> float:
    if q.values.shape[0] != l.batch_size:
        raise ValidationError(
            f"target batch {q.values.shape[0]} does not match logits batch {l.batch_size}"
        )
    p = softmax_scores(l)
    if swap_kl:
        rows = [kl_div(q.values[i], p[i]) for i in range(l.batch_size)]
    else:
        rows = [kl_div(p[i], q.values[i]) for i in range(l.batch_size)]
    return float(np.mean(rows))


def od_contrastive_loss(
    v2t: BatchLogits,
    t2v: BatchLogits,
    q_v2t: TargetDistribution,
    q_t2v: TargetDistribution,
    swap_kl: bool = False,
) -> float:
    """Mean of the per-direction KL losses."""
    if v2t.batch_size != t2v.batch_size:
        raise ValidationError("v2t and t2v batches differ in size")
    return 0.5 * (
        _directional_loss(v2t, q_v2t, swap_kl) + _directional_loss(t2v, q_t2v, swap_kl)
    )


def loss_grad_logits(l: BatchLogits, q: TargetDistribution) -> np.ndarray:
    """(K, B, B) derivative of the one-direction loss w.r.t. each raw logit.

    Where the model probability sits at the clamp floor the loss is locally
    flat in that coordinate, so its contribution to the chain rule is zero;
    this keeps the analytic gradient consistent with finite differences of
    the clamped loss.
    """
    if q.values.shape[0] != l.batch_size:
        raise ValidationError(
            f"target batch {q.values.shape[0]} does not match logits batch {l.batch_size}"
        )
    k, b, _ = l.values.shape
    sigma = _channel_softmax(l)          # (K, B, B)
    p = sigma.mean(axis=0)               # (B, B)
    # dKL_i/dp_i(m) = -q_i(m)/p_i(m) above the clamp, 0 at or below it
    dkl_dp = np.where(p > _P_CLAMP, -q.values / np.maximum(p, _P_CLAMP), 0.0)
    # dp_i(m)/dS_{k,i,j} = (1/(K tau)) sigma_{k,i}(m) (delta_mj - sigma_{k,i}(j))
    inner = np.einsum("im,kim->ki", dkl_dp, sigma)   # sum_m dkl_dp * sigma
    grad = sigma * (dkl_dp[None, :, :] - inner[:, :, None])
    return grad / (k * l.tau * b)
