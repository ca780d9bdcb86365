"""Scoring and the metric suite: accuracy, PR-AUC by threshold sweep,
precision/recall at 0.5, and the best-precision-at-recall-0.8 pair of
operating metrics, reported per dataset and per generator tag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor import Tensor, softmax
from .model import UniteModel, forward_batch
from .data import Manifest, ManifestEntry, load_embeddings, segment_video


class EvalError(Exception):
    pass


@dataclass
class ScoredSample:
    video_id: str
    segment_scores: list[np.ndarray]     # each a class-probability vector
    label: int
    dataset: str = ""
    generator: str = ""


@dataclass
class EvalReport:
    dataset: str
    accuracy: float
    pr_auc: float
    precision_at_05: float
    recall_at_05: float
    precision_at_recall_08: float
    recall_at_precision_08: float
    n_samples: int
    per_generator: dict[str, "EvalReport"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def video_score(segment_scores: Sequence[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of segment class-probability vectors."""
    if len(segment_scores) == 0:
        raise EvalError("video has no segment scores")
    return np.mean(np.asarray(segment_scores, dtype=np.float64), axis=0)


def threshold_metrics(scores: Sequence[float], labels: Sequence[int],
                      t: float) -> dict[str, float]:
    """Predict fake iff score >= t.  Precision is 1.0 when nothing is
    predicted positive (degenerate-case convention)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pred = scores >= t
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    tn = int(np.sum(~pred & (labels == 0)))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    accuracy = (tp + tn) / len(labels) if len(labels) else 0.0
    return {"accuracy": accuracy, "precision": precision, "recall": recall}


def pr_operating_points(scores: Sequence[float],
                        labels: Sequence[int]) -> list[tuple[float, float]]:
    """(precision, recall) at every distinct-score threshold plus the
    no-predictions point (precision 1, recall 0), sorted by recall."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    points = [(1.0, 0.0)]
    for t in np.unique(scores):
        m = threshold_metrics(scores, labels, float(t))
        points.append((m["precision"], m["recall"]))
    points.sort(key=lambda pr: (pr[1], -pr[0]))
    return points


def pr_curve_metrics(scores: Sequence[float],
                     labels: Sequence[int]) -> dict[str, float]:
    """Sweep all distinct-score thresholds.

    PR-AUC uses the step-wise rectangular rule over recall-sorted points;
    the recall-0.8 / precision-0.8 operating metrics return 0.0 when the
    constraint is unreachable.
    """
    labels_arr = np.asarray(labels)
    if len(labels_arr) == 0 or labels_arr.min() == labels_arr.max():
        raise EvalError("pr_curve_metrics needs at least one positive and "
                        "one negative label")
    points = pr_operating_points(scores, labels)
    auc = 0.0
    prev_r = 0.0
    for p, r in points:
        auc += (r - prev_r) * p
        prev_r = r
    p_at_r = [p for p, r in points if r >= 0.8]
    r_at_p = [r for p, r in points if p >= 0.8]
    return {
        "pr_auc": auc,
        "precision_at_recall_08": max(p_at_r) if p_at_r else 0.0,
        "recall_at_precision_08": max(r_at_p) if r_at_p else 0.0,
    }


def score_manifest(entries: Sequence[ManifestEntry], base: Path,
                   model: UniteModel, stride: int = 2,
                   frames_limit: int | None = None) -> list[ScoredSample]:
    """Run inference over every video; segment probabilities via softmax.

    ``frames_limit`` keeps only the first k strided frames per segment and
    pads the rest (temporal-context ablation).
    """
    cfg = model.cfg
    out = []
    for e in entries:
        frames, header = load_embeddings(base / e.embedding_path)
        if (header["t_s"], header["d_s"]) != (cfg.t_s, cfg.d_s):
            raise EvalError(
                f"'{e.video_id}': embedding geometry ({header['t_s']}, "
                f"{header['d_s']}) does not match model ({cfg.t_s}, {cfg.d_s})")
        segs = segment_video(frames, cfg.n_f, stride, label=e.label,
                             source_video=e.video_id)
        stacked = []
        for seg in segs:
            xi = seg.xi
            if frames_limit is not None:
                if frames_limit < 1 or frames_limit > cfg.n_f:
                    raise EvalError(f"frames limit {frames_limit} out of "
                                    f"range [1, {cfg.n_f}]")
                xi = xi.copy()
                xi[frames_limit:] = xi[frames_limit - 1]
            stacked.append(xi)
        logits, _ = forward_batch(Tensor(np.stack(stacked)), model,
                                  training=False)
        probs = list(softmax(Tensor(logits.data), axis=-1).data)
        out.append(ScoredSample(video_id=e.video_id, segment_scores=probs,
                                label=e.label, dataset=e.dataset,
                                generator=e.generator))
    return out


def _binary_report(tag: str, samples: Sequence[ScoredSample]) -> EvalReport:
    scores = [float(1.0 - video_score(s.segment_scores)[0]) for s in samples]
    labels = [min(s.label, 1) for s in samples]
    tm = threshold_metrics(scores, labels, 0.5)
    if len(set(labels)) > 1:
        pm = pr_curve_metrics(scores, labels)
    else:
        pm = {"pr_auc": 0.0, "precision_at_recall_08": 0.0,
              "recall_at_precision_08": 0.0}
    return EvalReport(dataset=tag, accuracy=tm["accuracy"], pr_auc=pm["pr_auc"],
                      precision_at_05=tm["precision"], recall_at_05=tm["recall"],
                      precision_at_recall_08=pm["precision_at_recall_08"],
                      recall_at_precision_08=pm["recall_at_precision_08"],
                      n_samples=len(samples))


def _finegrained_report(tag: str, samples: Sequence[ScoredSample]) -> EvalReport:
    preds = [int(np.argmax(video_score(s.segment_scores))) for s in samples]
    labels = [s.label for s in samples]
    acc = float(np.mean(np.asarray(preds) == np.asarray(labels))) if samples else 0.0
    return EvalReport(dataset=tag, accuracy=acc, pr_auc=0.0, precision_at_05=0.0,
                      recall_at_05=0.0, precision_at_recall_08=0.0,
                      recall_at_precision_08=0.0, n_samples=len(samples))


def build_reports(samples: Sequence[ScoredSample],
                  mode: str = "binary") -> list[EvalReport]:
    """One report per dataset tag, each with per-generator sub-reports."""
    make = _binary_report if mode == "binary" else _finegrained_report
    reports = []
    for tag in sorted({s.dataset for s in samples}):
        group = [s for s in samples if s.dataset == tag]
        rep = make(tag, group)
        for gen in sorted({s.generator for s in group}):
            sub = [s for s in group if s.generator == gen]
            rep.per_generator[gen] = make(gen, sub)
        reports.append(rep)
    return reports


def evaluate(manifest_path: str | Path, model: UniteModel, split: str = "test",
             mode: str = "binary", stride: int = 2,
             frames_limit: int | None = None) -> tuple[list[EvalReport],
                                                       list[ScoredSample]]:
    if mode not in ("binary", "finegrained"):
        raise EvalError(f"unknown mode '{mode}'")
    if mode == "binary" and model.cfg.n_c != 2:
        raise EvalError(f"binary mode needs a 2-class head, checkpoint has "
                        f"{model.cfg.n_c}")
    if mode == "finegrained" and model.cfg.n_c != 3:
        raise EvalError(f"finegrained mode needs a 3-class head, checkpoint "
                        f"has {model.cfg.n_c}")
    manifest = Manifest.load(manifest_path)
    entries = manifest.split(split)
    if not entries:
        raise EvalError(f"manifest has no '{split}' split")
    samples = score_manifest(entries, Path(manifest_path).parent, model,
                             stride=stride, frames_limit=frames_limit)
    return build_reports(samples, mode=mode), samples


def write_reports_json(reports: Sequence[EvalReport], path: str | Path) -> None:
    payload = [r.to_dict() for r in reports]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_raw_scores_csv(samples: Sequence[ScoredSample], n_c: int,
                         path: str | Path) -> None:
    cols = ",".join(f"score_class_{i}" for i in range(n_c))
    lines = [f"video_id,dataset,generator,label,{cols}\n"]
    for s in samples:
        vs = video_score(s.segment_scores)
        scores = ",".join(repr(float(x)) for x in vs)
        lines.append(f"{s.video_id},{s.dataset},{s.generator},{s.label},{scores}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_raw_scores_csv(path: str | Path) -> list[ScoredSample]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    n_c = sum(1 for h in header if h.startswith("score_class_"))
    samples = []
    for ln in lines[1:]:
        parts = ln.split(",")
        vid, ds, gen, label = parts[0], parts[1], parts[2], int(parts[3])
        probs = np.asarray([float(x) for x in parts[4:4 + n_c]])
        samples.append(ScoredSample(video_id=vid, segment_scores=[probs],
                                    label=label, dataset=ds, generator=gen))
    return samples
