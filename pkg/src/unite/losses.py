"""Cross-entropy, the attention-diversity loss, and the combined objective.

The diversity term works on pooled attention features P (n_h, n_f): each
sample's P is pulled toward its class's EMA feature center (within term,
hinged at a per-class margin), while center head-rows are pushed apart
(between term, hinged at a shared margin).  Centers are EMA state, never
gradient-trained: the trainer updates them after the optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor, ShapeError
from .model import AttentionBundle


@dataclass
class ADConfig:
    eta: float = 0.05
    delta_within: tuple[float, ...] = (0.01, -2.0)
    delta_between: float = 0.5
    lambda1: float = 0.5
    lambda2: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        self.delta_within = tuple(float(d) for d in self.delta_within)

    @classmethod
    def for_classes(cls, n_c: int, **kw) -> "ADConfig":
        dw = (0.01, -2.0) if n_c == 2 else (0.01, -2.0, 1.0)
        return cls(delta_within=dw, **kw)


@dataclass
class CenterState:
    """Per-class EMA feature centers with their iteration counter."""
    centers: np.ndarray          # (n_c, n_h, n_f)
    tau: int = 0

    @classmethod
    def zeros(cls, n_c: int, n_h: int, n_f: int) -> "CenterState":
        return cls(centers=np.zeros((n_c, n_h, n_f)), tau=0)


def pool_attention(attn: AttentionBundle, xi_reduced: Tensor) -> Tensor:
    """Attention-weighted feature pooling: P[h, f] = sum_c sum_d sv[h,f,c] * x[f,c,d].

    Differentiable w.r.t. both the attention pattern and the reduced tokens.
    """
    sv = attn.spatial_view                       # (..., n_h, n_f, cells)
    n_f, cells = sv.shape[-2], sv.shape[-1]
    if xi_reduced.shape[-3:-1] != (n_f, cells) or len(xi_reduced.shape) != len(sv.shape):
        raise ShapeError(
            f"reduced tokens {xi_reduced.shape} inconsistent with spatial view {sv.shape}")
    feat = T.tsum(xi_reduced, axis=-1)           # (..., n_f, cells)
    lead = feat.shape[:-2]
    feat = T.reshape(feat, lead + (1, n_f, cells))
    return T.tsum(sv * feat, axis=-1)            # (..., n_h, n_f)


def update_centers(state: CenterState, p_batch: np.ndarray,
                   labels: Sequence[int], cfg: ADConfig) -> CenterState:
    """EMA-move each class center toward that class's batch mean of P.

    Classes absent from the batch are untouched.  No gradients flow here;
    P values are plain arrays.
    """
    p_batch = np.asarray(p_batch, dtype=np.float64)
    if p_batch.ndim != 3 or p_batch.shape[0] == 0:
        raise ValueError(f"expected non-empty (B, n_h, n_f) batch, got {p_batch.shape}")
    labels = np.asarray(labels)
    centers = state.centers.copy()
    for c in np.unique(labels):
        mean = p_batch[labels == c].mean(axis=0)
        centers[c] = centers[c] - cfg.eta * (centers[c] - mean)
    return CenterState(centers=centers, tau=state.tau + 1)


def within_loss(p: Tensor, center: np.ndarray, delta_w: float) -> Tensor:
    """Hinge on the global L2 distance between P and its class center."""
    if p.shape != center.shape:
        raise ShapeError(f"P shape {p.shape} != center shape {center.shape}")
    dist = T.l2_norm(p - Tensor(center))
    return T.relu(dist - Tensor(delta_w))


def between_loss(center: np.ndarray, delta_b: float) -> float:
    """Sum over ordered head-row pairs of max(delta_b - ||C_k - C_l||, 0)."""
    n_h = center.shape[0]
    total = 0.0
    for k in range(n_h):
        for l in range(n_h):
            if k == l:
                continue
            d = float(np.linalg.norm(center[k] - center[l]))
            total += max(delta_b - d, 0.0)
    return total


def ad_loss(p_batch: Tensor, labels: Sequence[int], state: CenterState,
            cfg: ADConfig) -> tuple[Tensor, dict]:
    """Within term (batch mean) plus between term over present class centers.

    Gradient flows into ``p_batch`` only; centers are constants this step.
    """
    labels = list(labels)
    b = p_batch.shape[0]
    terms = []
    for i in range(b):
        p_i = T.take(p_batch, i, axis=0)
        terms.append(within_loss(p_i, state.centers[labels[i]],
                                 cfg.delta_within[labels[i]]))
    within = T.tmean(T.stack(terms)) if terms else Tensor(0.0)
    between = sum(between_loss(state.centers[c], cfg.delta_between)
                  for c in sorted(set(labels)))
    total = within + Tensor(between)
    diag = {"within": float(within.data), "between": float(between)}
    return total, diag


def ce_loss(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log softmax probability of the true class (stable form)."""
    labels = np.asarray(labels)
    b, n_c = logits.shape
    if labels.min() < 0 or labels.max() >= n_c:
        raise ValueError(f"labels out of range [0, {n_c})")
    m = Tensor(logits.data.max(axis=1, keepdims=True))   # detached shift
    z = logits - m
    lse = T.log(T.tsum(T.exp(z), axis=1))
    onehot = np.zeros((b, n_c))
    onehot[np.arange(b), labels] = 1.0
    picked = T.tsum(z * Tensor(onehot), axis=1)
    return T.tmean(lse - picked)


def unite_loss(logits: Tensor, p_batch: Tensor, labels: Sequence[int],
               state: CenterState, cfg: ADConfig) -> tuple[Tensor, dict]:
    """lambda1 * CE + lambda2 * AD, with component diagnostics."""
    ce = ce_loss(logits, labels)
    if cfg.lambda2 == 0.0:
        total = Tensor(cfg.lambda1) * ce
        diag = {"ce": float(ce.data), "ad": 0.0, "within": 0.0, "between": 0.0}
        return total, diag
    ad, ad_diag = ad_loss(p_batch, labels, state, cfg)
    total = Tensor(cfg.lambda1) * ce + Tensor(cfg.lambda2) * ad
    diag = {"ce": float(ce.data), "ad": float(ad.data), **ad_diag}
    return total, diag
