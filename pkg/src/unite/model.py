"""The trainable video transformer.

Frame embeddings (n_f, t_s, d_s) are average-pooled on their spatial token
grid, projected to the model width, tagged with per-frame sine-cosine
positional encodings, and run through a stack of pre-norm encoder blocks
with multi-head self-attention over all (frame, cell) tokens jointly.
First-block attention is captured for diversity regularization and for
heatmap export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .tensor import Tensor, ShapeError


@dataclass
class ModelConfig:
    n_f: int = 64            # frames per segment
    t_s: int = 729           # input tokens per frame (27x27 grid)
    d_s: int = 1152          # input feature dim
    grid_g: int = 3          # spatial cells per side after pooling
    d_model: int = 96
    n_h: int = 12
    depth: int = 4
    mlp_ratio: int = 4
    dropout_rate: float = 0.1
    n_c: int = 2

    def __post_init__(self):
        side = math.isqrt(self.t_s)
        if side * side != self.t_s:
            raise ValueError(f"t_s must be a perfect square, got {self.t_s}")
        if side % self.grid_g != 0:
            raise ValueError(
                f"grid_g={self.grid_g} does not evenly divide the {side}x{side} token grid")
        if self.d_model % self.n_h != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by n_h={self.n_h}")
        if self.n_c not in (2, 3):
            raise ValueError(f"n_c must be 2 or 3, got {self.n_c}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def grid_side(self) -> int:
        return math.isqrt(self.t_s)

    @property
    def n_cells(self) -> int:
        return self.grid_g * self.grid_g

    @property
    def seq_len(self) -> int:
        return self.n_f * self.n_cells

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class AttentionBundle:
    """First-block attention probabilities plus their per-frame spatial view.

    ``weights`` is (n_h, L, L) with rows summing to 1; ``spatial_view`` is
    (n_h, n_f, grid_g^2): attention received per token averaged over all
    queries, renormalized to sum to 1 per head.  Both stay on the autodiff
    tape so losses can differentiate through the attention pattern.
    """
    weights: Tensor
    spatial_view: Tensor


def _truncated_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


class UniteModel:
    """Parameter container; forward never mutates parameters."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)

        def proj(name: str, shape):
            self.params[name] = Tensor(_truncated_normal(rng, shape), requires_grad=True)

        def zeros(name: str, shape):
            self.params[name] = Tensor(np.zeros(shape), requires_grad=True)

        def ones(name: str, shape):
            self.params[name] = Tensor(np.ones(shape), requires_grad=True)

        d, c = cfg.d_model, cfg
        proj("input_proj.w", (c.d_s, d))
        zeros("input_proj.b", (d,))
        hidden = c.mlp_ratio * d
        for i in range(c.depth):
            p = f"blocks.{i}."
            ones(p + "ln1.g", (d,))
            zeros(p + "ln1.b", (d,))
            for m in ("q", "k", "v", "o"):
                proj(p + f"attn.w{m}", (d, d))
                zeros(p + f"attn.b{m}", (d,))
            ones(p + "ln2.g", (d,))
            zeros(p + "ln2.b", (d,))
            proj(p + "mlp.w1", (d, hidden))
            zeros(p + "mlp.b1", (hidden,))
            proj(p + "mlp.w2", (hidden, d))
            zeros(p + "mlp.b2", (d,))
        proj("head.w", (d, c.n_c))
        zeros("head.b", (c.n_c,))

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def positional_encoding(n_f: int, d: int) -> Tensor:
    """Sine-cosine frame position table: PE[j,2i]=sin(j/10000^(2i/d)), odd=cos."""
    if d % 2 != 0:
        raise ValueError(f"positional encoding dim must be even, got {d}")
    j = np.arange(n_f, dtype=np.float64)[:, None]
    i = np.arange(d // 2, dtype=np.float64)[None, :]
    angle = j / np.power(10000.0, 2.0 * i / d)
    pe = np.empty((n_f, d), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return Tensor(pe)


def reduce_tokens(xi: Tensor, model: UniteModel) -> Tensor:
    """Average-pool the token grid to grid_g x grid_g, then project to d_model.

    Accepts a single segment (n_f, t_s, d_s) or a batch with one extra
    leading dim.
    """
    c = model.cfg
    if xi.shape[-3:] != (c.n_f, c.t_s, c.d_s) or len(xi.shape) not in (3, 4):
        raise ShapeError(
            f"embedding shape {xi.shape} does not match config "
            f"({c.n_f}, {c.t_s}, {c.d_s})")
    side, g = c.grid_side, c.grid_g
    s = side // g
    lead = xi.shape[:-3]
    x = T.reshape(xi, lead + (c.n_f, g, s, g, s, c.d_s))
    ax = len(lead)
    pooled = T.tmean(x, axis=(ax + 2, ax + 4))            # (..., n_f, g, g, d_s)
    pooled = T.reshape(pooled, lead + (c.n_f, c.n_cells, c.d_s))
    return T.matmul(pooled, model.params["input_proj.w"]) + model.params["input_proj.b"]


def _encoder_block(x: Tensor, model: UniteModel, i: int, training: bool,
                   rng: np.random.Generator, capture: bool) -> tuple[Tensor, Tensor | None]:
    c = model.cfg
    p = model.params
    pre = f"blocks.{i}."
    b, L, d = x.shape
    dh = d // c.n_h

    h = T.layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
    q = T.matmul(h, p[pre + "attn.wq"]) + p[pre + "attn.bq"]
    k = T.matmul(h, p[pre + "attn.wk"]) + p[pre + "attn.bk"]
    v = T.matmul(h, p[pre + "attn.wv"]) + p[pre + "attn.bv"]
    q = T.transpose(T.reshape(q, (b, L, c.n_h, dh)), (0, 2, 1, 3))
    k = T.transpose(T.reshape(k, (b, L, c.n_h, dh)), (0, 2, 1, 3))
    v = T.transpose(T.reshape(v, (b, L, c.n_h, dh)), (0, 2, 1, 3))
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    attn = T.softmax(scores, axis=-1)                     # (b, n_h, L, L)
    ctx = T.matmul(attn, v)                               # (b, n_h, L, dh)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, L, d))
    out = T.matmul(ctx, p[pre + "attn.wo"]) + p[pre + "attn.bo"]
    out = T.dropout(out, c.dropout_rate, training, rng)
    x = x + out

    h = T.layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
    h = T.matmul(h, p[pre + "mlp.w1"]) + p[pre + "mlp.b1"]
    h = T.gelu(h)
    h = T.matmul(h, p[pre + "mlp.w2"]) + p[pre + "mlp.b2"]
    x = x + h
    return x, (attn if capture else None)


def _spatial_view(attn: Tensor, cfg: ModelConfig) -> Tensor:
    b = attn.shape[0]
    col_mean = T.tmean(attn, axis=2)                      # (b, n_h, L): received per token
    view = T.reshape(col_mean, (b, cfg.n_h, cfg.n_f, cfg.n_cells))
    total = T.tsum(view, axis=(2, 3), keepdims=True)
    return T.div(view, total)


def forward_batch(xi: Tensor, model: UniteModel, training: bool = False,
                  rng: np.random.Generator | None = None,
                  reduced_out: list | None = None) -> tuple[Tensor, AttentionBundle]:
    """Batched pipeline over (B, n_f, t_s, d_s); returns (B, n_c) logits and
    the first-block AttentionBundle with a leading batch dim."""
    c = model.cfg
    if rng is None:
        rng = np.random.default_rng(0)
    b = xi.shape[0]
    reduced = reduce_tokens(xi, model)                    # (b, n_f, cells, d_model)
    if reduced_out is not None:
        reduced_out.append(reduced)
    pe = positional_encoding(c.n_f, c.d_model)
    x = reduced + T.reshape(pe, (1, c.n_f, 1, c.d_model))
    x = T.reshape(x, (b, c.seq_len, c.d_model))
    first_attn: Tensor | None = None
    for i in range(c.depth):
        try:
            x, a = _encoder_block(x, model, i, training, rng, capture=(i == 0))
        except T.NumericError as e:
            raise T.NumericError(f"block {i}: {e}") from e
        if a is not None:
            first_attn = a
    pooled = T.tmean(x, axis=1)                           # (b, d_model)
    logits = T.matmul(pooled, model.params["head.w"]) + model.params["head.b"]
    assert first_attn is not None
    bundle = AttentionBundle(weights=first_attn,
                             spatial_view=_spatial_view(first_attn, c))
    return logits, bundle


def forward(xi: Tensor, model: UniteModel, training: bool = False,
            rng: np.random.Generator | None = None,
            reduced_out: list | None = None) -> tuple[Tensor, AttentionBundle]:
    """Run one segment through the full pipeline.

    Returns class logits (n_c,) and the first-block attention bundle.
    ``reduced_out``, when given, receives the pooled+projected token tensor
    (needed by the attention-pooling loss without a second forward).
    """
    c = model.cfg
    batched_reduced: list | None = [] if reduced_out is not None else None
    logits, bundle = forward_batch(T.reshape(xi, (1,) + xi.shape), model,
                                   training=training, rng=rng,
                                   reduced_out=batched_reduced)
    if reduced_out is not None and batched_reduced:
        reduced_out.append(T.take(batched_reduced[0], 0, axis=0))
    single = AttentionBundle(weights=T.take(bundle.weights, 0, axis=0),
                             spatial_view=T.take(bundle.spatial_view, 0, axis=0))
    return T.take(logits, 0, axis=0), single


def heatmap(attn: AttentionBundle, head: int, frame: int,
            upsample: int = 16) -> np.ndarray:
    """Min-max normalized spatial attention for one (head, frame).

    Returns a (grid_g*upsample, grid_g*upsample) float array in [0, 1],
    nearest-neighbor upsampled.  An all-equal map renders as all zeros.
    """
    sv = attn.spatial_view.data
    n_h, n_f, n_cells = sv.shape
    if not 0 <= head < n_h:
        raise IndexError(f"head {head} out of range [0, {n_h})")
    if not 0 <= frame < n_f:
        raise IndexError(f"frame {frame} out of range [0, {n_f})")
    g = math.isqrt(n_cells)
    grid = sv[head, frame].reshape(g, g)
    lo, hi = grid.min(), grid.max()
    if hi > lo:
        grid = (grid - lo) / (hi - lo)
    else:
        grid = np.zeros_like(grid)
    return np.kron(grid, np.ones((upsample, upsample)))
