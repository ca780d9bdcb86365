"""Training loop: AdamW with step-decay LR, per-step center updates,
epoch checkpointing, CSV metrics, and deterministic resume.

All stochasticity is keyed off (seed, epoch, step) so an interrupted run
resumed from a checkpoint is bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor, NumericError
from .model import ModelConfig, UniteModel, forward_batch
from .losses import ADConfig, CenterState, pool_attention, unite_loss, update_centers
from .data import Manifest, VideoSegment, load_segments, make_batches
from .checkpoint import save_checkpoint, load_checkpoint


@dataclass
class OptimConfig:
    lr0: float = 1e-4
    decay_factor: float = 0.5
    decay_every_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 25
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must be in [0, 1)")


@dataclass
class TrainState:
    model: UniteModel
    centers: CenterState
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    epoch: int = 0

    @classmethod
    def fresh(cls, model_cfg: ModelConfig, seed: int) -> "TrainState":
        model = UniteModel(model_cfg, seed=seed)
        centers = CenterState.zeros(model_cfg.n_c, model_cfg.n_h, model_cfg.n_f)
        m = {k: np.zeros_like(p.data) for k, p in model.params.items()}
        v = {k: np.zeros_like(p.data) for k, p in model.params.items()}
        return cls(model=model, centers=centers, m=m, v=v)


def lr_at(step: int, cfg: OptimConfig) -> float:
    """Discrete step decay: lr0 * decay_factor ** floor(step / decay_every)."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return cfg.lr0 * cfg.decay_factor ** (step // cfg.decay_every_steps)


def optimizer_step(state: TrainState, grads: dict[str, np.ndarray],
                   cfg: OptimConfig) -> None:
    """One AdamW update: bias-corrected moments, decoupled weight decay."""
    lr = lr_at(state.step, cfg)
    t = state.step + 1
    for name, p in state.model.params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for '{name}'")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")
        state.m[name] = cfg.beta1 * state.m[name] + (1 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1 - cfg.beta2) * g * g
        m_hat = state.m[name] / (1 - cfg.beta1 ** t)
        v_hat = state.v[name] / (1 - cfg.beta2 ** t)
        new = p.data - lr * (m_hat / (np.sqrt(v_hat) + cfg.eps)
                             + cfg.weight_decay * p.data)
        state.model.params[name] = Tensor(new, requires_grad=True)
    state.step = t


def apply_loss_mode(ad_cfg: ADConfig, loss_mode: str) -> ADConfig:
    """Ablation wiring: 'ce' zeroes lambda2, 'ad' zeroes lambda1."""
    if loss_mode == "ce":
        return dataclasses.replace(ad_cfg, lambda2=0.0)
    if loss_mode == "ad":
        return dataclasses.replace(ad_cfg, lambda1=0.0)
    if loss_mode == "ce+ad":
        return ad_cfg
    raise ValueError(f"unknown loss mode '{loss_mode}'")


def train_step(state: TrainState, batch: Sequence[VideoSegment],
               optim_cfg: OptimConfig, ad_cfg: ADConfig) -> dict:
    """forward -> loss -> backward -> optimizer step -> center update."""
    model = state.model
    model.zero_grad()
    need_ad = ad_cfg.lambda2 != 0.0
    rng = np.random.default_rng([optim_cfg.seed, 1000003, state.step])
    xi = Tensor(np.stack([seg.xi for seg in batch]))
    reduced: list = []
    logits_b, attn = forward_batch(xi, model, training=True, rng=rng,
                                   reduced_out=reduced)
    labels = [seg.label for seg in batch]
    if need_ad:
        p_batch = pool_attention(attn, reduced[0])
    else:
        p_batch = Tensor(np.zeros((len(batch), model.cfg.n_h, model.cfg.n_f)))
    loss, diag = unite_loss(logits_b, p_batch, labels, state.centers, ad_cfg)
    loss.backward()
    grads = {k: p.grad for k, p in model.params.items()}
    lr = lr_at(state.step, optim_cfg)
    optimizer_step(state, grads, optim_cfg)
    if need_ad:
        state.centers = update_centers(state.centers, p_batch.data, labels, ad_cfg)
    preds = logits_b.data.argmax(axis=1)
    acc = float(np.mean(preds == np.asarray(labels)))
    return {"lr": lr, "loss_total": float(loss.data), "train_acc": acc, **diag}


_CSV_HEADER = "step,epoch,lr,loss_total,loss_ce,loss_within,loss_between,train_acc\n"


def _csv_row(step: int, epoch: int, rec: dict) -> str:
    return (f"{step},{epoch},{rec['lr']!r},{rec['loss_total']!r},"
            f"{rec['ce']!r},{rec['within']!r},{rec['between']!r},"
            f"{rec['train_acc']!r}\n")


def _checkpoint_extras(state: TrainState) -> dict[str, np.ndarray]:
    extras = {
        "centers": state.centers.centers,
        "centers_tau": np.asarray(float(state.centers.tau)),
        "opt_step": np.asarray(float(state.step)),
        "epoch": np.asarray(float(state.epoch)),
    }
    for name in state.model.params:
        extras["opt_m." + name] = state.m[name]
        extras["opt_v." + name] = state.v[name]
    return extras


def load_train_state(path: str | Path) -> TrainState:
    model, extras = load_checkpoint(path)
    cfg = model.cfg
    centers = CenterState(centers=extras["centers"].copy(),
                          tau=int(extras["centers_tau"]))
    m = {k: extras["opt_m." + k].copy() for k in model.params}
    v = {k: extras["opt_v." + k].copy() for k in model.params}
    return TrainState(model=model, centers=centers, m=m, v=v,
                      step=int(extras["opt_step"]), epoch=int(extras["epoch"]))


def train(manifest_path: str | Path, model_cfg: ModelConfig,
          optim_cfg: OptimConfig, ad_cfg: ADConfig, out_dir: str | Path,
          loss_mode: str = "ce+ad", stride: int = 2,
          resume_from: str | Path | None = None) -> TrainState:
    """Run the full optimization; writes checkpoints/ and metrics.csv."""
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    ad_cfg = apply_loss_mode(ad_cfg, loss_mode)

    manifest = Manifest.load(manifest_path)
    train_entries = manifest.split("train")
    if not train_entries:
        raise ValueError("manifest has no train split")
    segments = load_segments(manifest, manifest_path, model_cfg.n_f,
                             stride=stride, entries=train_entries)

    csv_path = out / "metrics.csv"
    if resume_from is not None:
        state = load_train_state(resume_from)
        start_epoch = state.epoch
        # Keep only the rows the resumed checkpoint has already seen.
        if csv_path.exists():
            lines = csv_path.read_text(encoding="utf-8").splitlines(keepends=True)
            kept = [lines[0]] + [ln for ln in lines[1:]
                                 if int(ln.split(",")[1]) < start_epoch]
            csv_path.write_text("".join(kept), encoding="utf-8")
        else:
            csv_path.write_text(_CSV_HEADER, encoding="utf-8")
    else:
        state = TrainState.fresh(model_cfg, seed=optim_cfg.seed)
        start_epoch = 0
        csv_path.write_text(_CSV_HEADER, encoding="utf-8")

    with open(csv_path, "a", encoding="utf-8") as csv:
        for epoch in range(start_epoch, optim_cfg.epochs):
            for batch in make_batches(segments, optim_cfg.batch_size,
                                      optim_cfg.seed, epoch):
                step = state.step
                try:
                    rec = train_step(state, batch, optim_cfg, ad_cfg)
                except NumericError as e:
                    raise NumericError(f"step {step}: {e}") from e
                csv.write(_csv_row(step, epoch, rec))
            state.epoch = epoch + 1
            save_checkpoint(out / "checkpoints" / f"epoch_{state.epoch:03d}.ckpt",
                            state.model, extras=_checkpoint_extras(state))
    save_checkpoint(out / "checkpoints" / "final.ckpt", state.model,
                    extras=_checkpoint_extras(state))
    return state


# ---------------------------------------------------------------------------
# Run-config file: "section.key = value" lines, '#' comments, unknown keys
# rejected.  Covers every field of ModelConfig / OptimConfig / ADConfig plus
# run-level switches.


class ConfigError(Exception):
    pass


_RUN_DEFAULTS = {"loss_mode": "ce+ad", "stride": 2}


def format_config(model_cfg: ModelConfig, optim_cfg: OptimConfig,
                  ad_cfg: ADConfig, run: dict | None = None) -> str:
    run = {**_RUN_DEFAULTS, **(run or {})}
    lines = []
    for prefix, cfg in (("model", model_cfg), ("optim", optim_cfg)):
        for f in dataclasses.fields(cfg):
            lines.append(f"{prefix}.{f.name} = {getattr(cfg, f.name)!r}")
    for f in dataclasses.fields(ad_cfg):
        val = getattr(ad_cfg, f.name)
        if f.name == "delta_within":
            val = ",".join(repr(x) for x in val)
            lines.append(f"ad.delta_within = {val}")
        else:
            lines.append(f"ad.{f.name} = {val!r}")
    for k in sorted(run):
        lines.append(f"run.{k} = {run[k]!r}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> tuple[ModelConfig, OptimConfig, ADConfig, dict]:
    sections: dict[str, dict[str, str]] = {"model": {}, "optim": {}, "ad": {}, "run": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key '{key}' missing section prefix")
        section, name = key.split(".", 1)
        if section not in sections:
            raise ConfigError(f"line {lineno}: unknown section '{section}'")
        if name in sections[section]:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        sections[section][name] = val

    def build(cls, vals: dict[str, str], section: str):
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(vals) - set(fields)
        if unknown:
            raise ConfigError(f"unknown {section} keys {sorted(unknown)}")
        kwargs = {}
        for name, sval in vals.items():
            if name == "delta_within":
                kwargs[name] = tuple(float(x) for x in sval.split(","))
            elif fields[name].type in ("int", int):
                kwargs[name] = int(sval)
            elif fields[name].type in ("float", float):
                kwargs[name] = float(sval)
            else:
                kwargs[name] = _py_literal(sval)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{section}: {e}") from e

    model_cfg = build(ModelConfig, sections["model"], "model")
    optim_cfg = build(OptimConfig, sections["optim"], "optim")
    ad_cfg = build(ADConfig, sections["ad"], "ad")
    unknown = set(sections["run"]) - set(_RUN_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown run keys {sorted(unknown)}")
    run = dict(_RUN_DEFAULTS)
    for k, sval in sections["run"].items():
        run[k] = int(sval) if isinstance(_RUN_DEFAULTS[k], int) else _py_literal(sval)
    return model_cfg, optim_cfg, ad_cfg, run


def _py_literal(s: str):
    import ast
    try:
        return ast.literal_eval(s)
    except (ValueError, SyntaxError):
        return s
