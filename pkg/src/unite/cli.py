"""Command-line entry point for the full pipeline.

Subcommands: synth, train, eval, heatmap, gradcheck.
Exit codes: 0 success, 2 validation error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .tensor import Tensor, NumericError, ShapeError
from .model import ModelConfig, forward, heatmap
from .losses import ADConfig
from .data import DataError, Manifest, SynthSpec, default_synth_spec, \
    load_embeddings, segment_video, synth_dataset
from .training import ConfigError, OptimConfig, apply_loss_mode, format_config, \
    parse_config, train
from .checkpoint import CheckpointError, load_checkpoint
from .evaluation import EvalError, evaluate, write_raw_scores_csv, \
    write_reports_json
from .gradcheck import run_battery
from .viz import colormap_yellow_blue, write_pgm, write_ppm

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _cmd_synth(args) -> int:
    if args.spec:
        try:
            raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            print(f"error: cannot read spec file: {e}", file=sys.stderr)
            return EXIT_VALIDATION
        try:
            spec = SynthSpec.from_dict(raw)
        except DataError as e:
            print(f"error: invalid synth spec: {e}", file=sys.stderr)
            return EXIT_VALIDATION
    else:
        spec = default_synth_spec(seed=args.seed, n_videos=args.n_videos)
    manifest = synth_dataset(spec, args.out)
    print(f"wrote {len(manifest.entries)} videos to {args.out}")
    return EXIT_OK


def _load_run_config(args):
    if args.config:
        model_cfg, optim_cfg, ad_cfg, run = parse_config(
            Path(args.config).read_text(encoding="utf-8"))
    else:
        model_cfg, optim_cfg = ModelConfig(), OptimConfig()
        ad_cfg, run = None, dict()
    return model_cfg, optim_cfg, ad_cfg, run


def _cmd_train(args) -> int:
    model_cfg, optim_cfg, ad_cfg, run = _load_run_config(args)
    depths = [int(d) for d in args.depth.split(",")] if args.depth else [model_cfg.depth]
    if args.frames is not None:
        model_cfg = _replace(model_cfg, n_f=args.frames)
    if args.seed is not None:
        optim_cfg = _replace(optim_cfg, seed=args.seed)
    if args.epochs is not None:
        optim_cfg = _replace(optim_cfg, epochs=args.epochs)
    loss_mode = args.loss or run.get("loss_mode", "ce+ad")
    stride = args.stride if args.stride is not None else run.get("stride", 2)
    apply_loss_mode(ADConfig(), loss_mode)  # validate the mode name early

    for depth in depths:
        cfg = _replace(model_cfg, depth=depth)
        if ad_cfg is None:
            cur_ad = ADConfig.for_classes(cfg.n_c)
        else:
            cur_ad = ad_cfg
        out = Path(args.out) if len(depths) == 1 else Path(args.out) / f"depth_{depth}"
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.echo").write_text(
            format_config(cfg, optim_cfg, cur_ad,
                          {"loss_mode": loss_mode, "stride": stride}),
            encoding="utf-8")
        train(args.manifest, cfg, optim_cfg, cur_ad, out, loss_mode=loss_mode,
              stride=stride, resume_from=args.resume)
        print(f"run complete: {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    reports, samples = evaluate(args.manifest, model, split=args.split,
                                mode=args.mode, stride=args.stride,
                                frames_limit=args.frames)
    out = Path(args.out)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    write_reports_json(reports, out / "reports" / "report.json")
    write_raw_scores_csv(samples, model.cfg.n_c, out / "reports" / "raw_scores.csv")
    for r in reports:
        print(f"{r.dataset}: accuracy={r.accuracy:.4f} pr_auc={r.pr_auc:.4f} "
              f"n={r.n_samples}")
    return EXIT_OK


def _cmd_heatmap(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    cfg = model.cfg
    frames, header = load_embeddings(args.embedding)
    if (header["t_s"], header["d_s"]) != (cfg.t_s, cfg.d_s):
        raise EvalError(f"embedding geometry ({header['t_s']}, {header['d_s']}) "
                        f"does not match model ({cfg.t_s}, {cfg.d_s})")
    seg = segment_video(frames, cfg.n_f, args.stride)[0]
    _, attn = forward(Tensor(seg.xi), model, training=False)
    grid = heatmap(attn, args.head, args.frame, upsample=args.upsample)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.gray:
        write_pgm(out, grid)
    else:
        write_ppm(out, colormap_yellow_blue(grid))
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    results = run_battery(check_all_params=args.all_params)
    failed = False
    for name, err, tol in results:
        ok = err < tol
        failed |= not ok
        print(f"{name:20s} rel_err={err:.3e} tol={tol:.0e} "
              f"{'PASS' if ok else 'FAIL'}")
    return EXIT_NUMERIC if failed else EXIT_OK


def _replace(cfg, **kw):
    import dataclasses
    return dataclasses.replace(cfg, **kw)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unite",
                                description="Synthetic-video detector pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic embedding dataset")
    s.add_argument("--spec", help="JSON synth spec file (default: built-in)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-videos", type=int, default=200)
    s.set_defaults(fn=_cmd_synth)

    s = sub.add_parser("train", help="train a model from a manifest")
    s.add_argument("--config", help="run config file")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--loss", choices=["ce", "ad", "ce+ad"])
    s.add_argument("--depth", help="comma list for a depth sweep, e.g. 2,4,6,8")
    s.add_argument("--frames", type=int, help="frames per segment (n_f)")
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--stride", type=int)
    s.add_argument("--resume", help="checkpoint to resume from")
    s.set_defaults(fn=_cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=["binary", "finegrained"], default="binary")
    s.add_argument("--split", default="test")
    s.add_argument("--frames", type=int,
                   help="use only the first k strided frames per segment")
    s.add_argument("--stride", type=int, default=2)
    s.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("heatmap", help="export a first-block attention heatmap")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--embedding", required=True)
    s.add_argument("--head", type=int, required=True)
    s.add_argument("--frame", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--upsample", type=int, default=16)
    s.add_argument("--stride", type=int, default=2)
    s.add_argument("--gray", action="store_true", help="grayscale PGM output")
    s.set_defaults(fn=_cmd_heatmap)

    s = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    s.add_argument("--all-params", action="store_true",
                   help="sweep every parameter of the tiny model")
    s.set_defaults(fn=_cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, CheckpointError, EvalError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
