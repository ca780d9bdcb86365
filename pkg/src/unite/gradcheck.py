"""Gradient-check battery: every differentiable op plus the full training
objective on a tiny model, against central finite differences."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor, grad_check
from .model import ModelConfig, UniteModel, forward
from .losses import ADConfig, CenterState, pool_attention, unite_loss


TINY_CONFIG = ModelConfig(n_f=4, t_s=16, d_s=8, grid_g=2, d_model=16, n_h=4,
                          depth=2, mlp_ratio=2, dropout_rate=0.1, n_c=2)


def tiny_model(seed: int = 0) -> UniteModel:
    return UniteModel(TINY_CONFIG, seed=seed)


def check_ops(seed: int = 0) -> list[tuple[str, float, float]]:
    """Per-op gradient checks; returns (name, max_rel_err, tolerance)."""
    rng = np.random.default_rng(seed)
    results = []

    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    w_mm = Tensor(rng.normal(size=(3, 2)))
    results.append(("matmul", grad_check(
        lambda x, y: T.tsum(T.matmul(x, y) * w_mm), [a, b]), 1e-6))

    x = Tensor(rng.normal(size=(5,)), requires_grad=True)
    w = Tensor(rng.normal(size=(5,)))
    results.append(("softmax", grad_check(
        lambda t: T.tsum(T.softmax(t, axis=-1) * w), [x]), 1e-6))

    x = Tensor(rng.normal(size=(3, 6)), requires_grad=True)
    g = Tensor(rng.normal(size=(6,)), requires_grad=True)
    c = Tensor(rng.normal(size=(6,)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 6)))
    results.append(("layer_norm", grad_check(
        lambda t, gg, bb: T.tsum(T.layer_norm(t, gg, bb) * w), [x, g, c]), 1e-6))

    x = Tensor(rng.normal(size=(7,)), requires_grad=True)
    w_gelu = Tensor(rng.normal(size=(7,)))
    results.append(("gelu", grad_check(
        lambda t: T.tsum(T.gelu(t) * w_gelu), [x]), 1e-6))

    x = Tensor(rng.normal(size=(6,)) + 2.0, requires_grad=True)  # away from origin
    results.append(("l2_norm", grad_check(lambda t: T.l2_norm(t), [x]), 1e-6))

    x = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    mask_rng_seed = 123

    def f_drop(t):
        drng = np.random.default_rng(mask_rng_seed)
        return T.tsum(T.dropout(t, 0.3, True, drng))

    results.append(("dropout", grad_check(f_drop, [x]), 1e-6))

    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    results.append(("sum_sq_selftest", grad_check(
        lambda t: T.tsum(t * t), [x]), 1e-9))
    return results


def check_full_loss(seed: int = 0, check_all_params: bool = False
                    ) -> tuple[str, float, float]:
    """Finite-difference check of the complete objective on the tiny model.

    Checks the gradient w.r.t. the input embeddings and (by default) one
    representative parameter of each kind; ``check_all_params`` sweeps
    every parameter tensor instead.
    """
    cfg = TINY_CONFIG
    model = tiny_model(seed)
    rng = np.random.default_rng([seed, 5])
    xi = Tensor(rng.normal(size=(cfg.n_f, cfg.t_s, cfg.d_s)), requires_grad=True)
    xi2 = Tensor(rng.normal(size=(cfg.n_f, cfg.t_s, cfg.d_s)), requires_grad=True)
    labels = [0, 1]
    centers = CenterState(
        centers=rng.normal(size=(cfg.n_c, cfg.n_h, cfg.n_f)) * 0.1, tau=3)
    ad_cfg = ADConfig()

    if check_all_params:
        names = list(model.params)
    else:
        names = ["input_proj.w", "blocks.0.attn.wq", "blocks.0.attn.wo",
                 "blocks.0.ln1.g", "blocks.0.mlp.w1", "blocks.1.attn.wv",
                 "head.w", "head.b"]
    param_tensors = [model.params[n] for n in names]

    def f(x1, x2, *params):
        for n, p in zip(names, params):
            model.params[n] = p
        logits, p_feats = [], []
        for i, x in enumerate((x1, x2)):
            drng = np.random.default_rng([seed, 77, i])
            reduced: list = []
            lg, attn = forward(x, model, training=True, rng=drng,
                               reduced_out=reduced)
            logits.append(lg)
            p_feats.append(pool_attention(attn, reduced[0]))
        loss, _ = unite_loss(T.stack(logits), T.stack(p_feats), labels,
                             centers, ad_cfg)
        return loss

    err = grad_check(f, [xi, xi2] + param_tensors)
    return ("unite_loss", err, 1e-4)


def run_battery(check_all_params: bool = False) -> list[tuple[str, float, float]]:
    results = check_ops()
    results.append(check_full_loss(check_all_params=check_all_params))
    return results
