"""Dataset plumbing: the binary embedding store, manifests, segmentation
into fixed-length frame windows, deterministic batching, and a synthetic
embedding generator for tests and toy-scale training runs.

Embedding file layout (little-endian throughout):
    magic "UNITEEMB" | version u32 | frame_count u32 | t_s u32 | d_s u32
    | dtype code u32 (1 = float32) | body: frame-major float32 values
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

EMB_MAGIC = b"UNITEEMB"
EMB_VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<8sIIIII")

_SPLITS = ("train", "val", "test")
_ENTRY_FIELDS = {"video_id", "embedding_path", "label", "dataset", "generator", "split"}


class DataError(Exception):
    """Manifest or embedding-store validation failure."""


@dataclass
class ManifestEntry:
    video_id: str
    embedding_path: str
    label: int
    dataset: str
    generator: str
    split: str


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.video_id in seen:
                raise DataError(f"duplicate video_id '{e.video_id}' in manifest")
            seen.add(e.video_id)
            if e.split not in _SPLITS:
                raise DataError(f"bad split '{e.split}' for video '{e.video_id}'")
            if e.label < 0:
                raise DataError(f"negative label for video '{e.video_id}'")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def save(self, path: str | Path) -> None:
        payload = [asdict(e) for e in self.entries]
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, strict: bool = True) -> "Manifest":
        import warnings
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read manifest {path}: {e}") from e
        if not isinstance(raw, list):
            raise DataError(f"manifest {path} is not a JSON array")
        entries = []
        base = Path(path).parent
        for i, rec in enumerate(raw):
            unknown = set(rec) - _ENTRY_FIELDS
            if unknown:
                msg = f"manifest entry {i} has unknown fields {sorted(unknown)}"
                if strict:
                    raise DataError(msg)
                warnings.warn(msg)
                rec = {k: v for k, v in rec.items() if k in _ENTRY_FIELDS}
            missing = _ENTRY_FIELDS - set(rec)
            if missing:
                raise DataError(f"manifest entry {i} missing fields {sorted(missing)}")
            entries.append(ManifestEntry(**rec))
        m = cls(entries=entries)
        for e in m.entries:
            p = base / e.embedding_path
            if not p.exists():
                raise DataError(f"embedding file not found for '{e.video_id}': {p}")
        return m


@dataclass
class VideoSegment:
    xi: np.ndarray            # (n_f, t_s, d_s) float64
    label: int
    source_video: str
    start_frame: int          # index into the strided frame sequence
    n_real_frames: int        # frames before padding
    dataset: str = ""
    generator: str = ""


def write_embedding_file(path: str | Path, frames: np.ndarray) -> None:
    """Write (frame_count, t_s, d_s) values as the float32 store format."""
    arr = np.asarray(frames, dtype=np.float32)
    if arr.ndim != 3:
        raise DataError(f"expected (frames, t_s, d_s) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("refusing to write non-finite embedding values")
    fc, t_s, d_s = arr.shape
    header = _HEADER.pack(EMB_MAGIC, EMB_VERSION, fc, t_s, d_s, DTYPE_F32)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.astype("<f4").tobytes())


def load_embeddings(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read an embedding file; values widened to float64.

    Raises DataError with a byte offset for truncation, bad magic, or
    non-finite values.
    """
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise DataError(
            f"{path}: truncated header, expected {_HEADER.size} bytes, got {len(blob)}")
    magic, version, fc, t_s, d_s, dtype = _HEADER.unpack_from(blob, 0)
    if magic != EMB_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r} at byte 0")
    if version != EMB_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise DataError(f"{path}: unsupported dtype code {dtype}")
    expected = fc * t_s * d_s * 4
    body = blob[_HEADER.size:]
    if len(body) != expected:
        raise DataError(
            f"{path}: body truncated at byte {_HEADER.size + len(body)}, "
            f"expected {expected} body bytes, got {len(body)}")
    values = np.frombuffer(body, dtype="<f4")
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.argmax(bad))
        raise DataError(f"{path}: non-finite value at flat index {idx} "
                        f"(byte {_HEADER.size + idx * 4})")
    frames = values.astype(np.float64).reshape(fc, t_s, d_s)
    header = {"frame_count": fc, "t_s": t_s, "d_s": d_s, "version": version}
    return frames, header


def segment_video(frames: np.ndarray, n_f: int, stride: int = 2,
                  label: int = 0, source_video: str = "",
                  dataset: str = "", generator: str = "") -> list[VideoSegment]:
    """Stride the frame sequence, cut consecutive non-overlapping n_f windows,
    pad a final short window by repeating the last real frame."""
    if len(frames) == 0:
        raise DataError(f"video '{source_video}' has no frames")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    strided = frames[::stride]
    segments = []
    for start in range(0, len(strided), n_f):
        window = strided[start:start + n_f]
        n_real = len(window)
        if n_real < n_f:
            pad = np.repeat(window[-1:], n_f - n_real, axis=0)
            window = np.concatenate([window, pad], axis=0)
        segments.append(VideoSegment(
            xi=np.asarray(window, dtype=np.float64), label=label,
            source_video=source_video, start_frame=start, n_real_frames=n_real,
            dataset=dataset, generator=generator))
    return segments


def load_segments(manifest: Manifest, manifest_path: str | Path, n_f: int,
                  stride: int = 2,
                  entries: Sequence[ManifestEntry] | None = None) -> list[VideoSegment]:
    base = Path(manifest_path).parent
    segments: list[VideoSegment] = []
    for e in (entries if entries is not None else manifest.entries):
        frames, _ = load_embeddings(base / e.embedding_path)
        segments.extend(segment_video(frames, n_f, stride, label=e.label,
                                      source_video=e.video_id,
                                      dataset=e.dataset, generator=e.generator))
    return segments


def make_batches(segments: Sequence, batch_size: int, seed: int,
                 epoch: int) -> Iterator[list]:
    """Deterministic shuffle keyed by (seed, epoch); final short batch kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng([seed, epoch]).permutation(len(segments))
    for i in range(0, len(order), batch_size):
        yield [segments[j] for j in order[i:i + batch_size]]


# ---------------------------------------------------------------------------
# Synthetic embedding generator

_RECIPES = ("real", "face", "background", "global")


@dataclass
class ClassSpec:
    label: int
    recipe: str               # one of _RECIPES
    generator: str            # manifest generator tag
    fraction: float           # share of videos drawn from this class
    amplitude: float = 1.0

    def __post_init__(self):
        if self.recipe not in _RECIPES:
            raise DataError(f"unknown recipe '{self.recipe}'")


@dataclass
class SynthSpec:
    n_videos: int = 200
    frames_min: int = 24
    frames_max: int = 48
    t_s: int = 16
    d_s: int = 8
    seed: int = 0
    test_fraction: float = 0.25
    style_amplitude: float = 0.0
    classes: list[ClassSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.n_videos < 1:
            raise DataError("n_videos must be >= 1")
        if self.style_amplitude < 0:
            raise DataError("style_amplitude must be >= 0")
        if self.frames_min < 1 or self.frames_max < self.frames_min:
            raise DataError("need 1 <= frames_min <= frames_max")
        side = math.isqrt(self.t_s)
        if side * side != self.t_s:
            raise DataError(f"t_s must be a perfect square, got {self.t_s}")
        if not self.classes:
            raise DataError("at least one class spec is required")
        total = sum(c.fraction for c in self.classes)
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise DataError(f"class fractions must sum to 1, got {total}")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        import dataclasses
        d = dict(d)
        raw_classes = d.pop("classes", [])
        class_fields = {f.name for f in dataclasses.fields(ClassSpec)}
        classes = []
        for i, c in enumerate(raw_classes):
            unknown = set(c) - class_fields
            if unknown:
                raise DataError(f"class spec {i}: unknown fields {sorted(unknown)}")
            try:
                classes.append(ClassSpec(**c))
            except TypeError as e:
                raise DataError(f"class spec {i}: {e}") from e
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise DataError(f"unknown synth spec fields {sorted(unknown)}")
        try:
            return cls(classes=classes, **d)
        except TypeError as e:
            raise DataError(str(e)) from e


def _cell_masks(t_s: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (t_s,) masks for center ("face") and border ("background") cells."""
    side = math.isqrt(t_s)
    grid = np.zeros((side, side), dtype=bool)
    lo, hi = side // 4, side - side // 4
    grid[lo:hi, lo:hi] = True
    center = grid.reshape(-1)
    border = ~center
    return center, border


def _signature(rng: np.random.Generator, d_s: int) -> np.ndarray:
    v = rng.normal(size=d_s)
    return v / np.linalg.norm(v)


def synth_dataset(spec: SynthSpec, out_dir: str | Path) -> Manifest:
    """Write deterministic synthetic embedding files plus a manifest.

    Class recipes place a class signature either in the center token cells
    ("face"), the border cells ("background"), or globally with a temporal
    discontinuity ("global"); "real" videos are pure base noise.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    center, border = _cell_masks(spec.t_s)
    # One artifact signature per dataset: every fake recipe injects the same
    # class signature, only its placement (center, border, global+temporal)
    # differs.  That is what makes cross-recipe transfer meaningful.
    sig_rng = np.random.default_rng([spec.seed, 7])
    sig = _signature(sig_rng, spec.d_s)

    # Deterministic class assignment: largest-remainder split of n_videos.
    counts = [int(c.fraction * spec.n_videos) for c in spec.classes]
    while sum(counts) < spec.n_videos:
        counts[int(np.argmax([c.fraction * spec.n_videos - n
                              for c, n in zip(spec.classes, counts)]))] += 1
    assignment: list[ClassSpec] = []
    for c, n in zip(spec.classes, counts):
        assignment.extend([c] * n)

    entries = []
    for vid, cspec in enumerate(assignment):
        rng = np.random.default_rng([spec.seed, 11, vid])
        n_frames = int(rng.integers(spec.frames_min, spec.frames_max + 1))
        frames = rng.normal(0.0, 1.0, size=(n_frames, spec.t_s, spec.d_s))
        if spec.style_amplitude > 0:
            # Benign per-video "style" shift applied to every class: detectors
            # must separate the class signature from harmless video-level
            # variation rather than from white noise alone.
            style = _signature(rng, spec.d_s)
            frames += spec.style_amplitude * style
        if cspec.recipe == "face":
            frames[:, center, :] += cspec.amplitude * sig
        elif cspec.recipe == "background":
            frames[:, border, :] += cspec.amplitude * sig
        elif cspec.recipe == "global":
            # Alternating-sign global signature: a temporal discontinuity
            # between consecutive strided frames.
            signs = np.where(np.arange(n_frames) % 2 == 0, 1.0, -1.0)
            frames += cspec.amplitude * signs[:, None, None] * sig
        name = f"video_{vid:04d}.emb"
        write_embedding_file(out / name, frames)
        # Per-class round-robin test assignment keeps splits class-balanced.
        idx_in_class = sum(1 for e in entries if e.generator == cspec.generator)
        period = max(int(round(1.0 / spec.test_fraction)), 1) if spec.test_fraction > 0 else 0
        split = "test" if period and idx_in_class % period == 0 else "train"
        entries.append(ManifestEntry(
            video_id=f"video_{vid:04d}", embedding_path=name, label=cspec.label,
            dataset="synthetic", generator=cspec.generator, split=split))
    manifest = Manifest(entries=entries)
    manifest.save(out / "manifest.json")
    return manifest


def default_synth_spec(seed: int = 0, n_videos: int = 200, t_s: int = 16,
                       d_s: int = 8) -> SynthSpec:
    """Three-recipe binary dataset: real vs (face | background | global) fakes."""
    return SynthSpec(
        n_videos=n_videos, t_s=t_s, d_s=d_s, seed=seed,
        classes=[
            ClassSpec(label=0, recipe="real", generator="real", fraction=0.5),
            ClassSpec(label=1, recipe="face", generator="face", fraction=0.2,
                      amplitude=1.0),
            ClassSpec(label=1, recipe="background", generator="background",
                      fraction=0.2, amplitude=0.25),
            ClassSpec(label=1, recipe="global", generator="global", fraction=0.1,
                      amplitude=0.5),
        ])
