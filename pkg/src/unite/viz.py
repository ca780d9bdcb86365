"""Attention-heatmap image export: yellow-to-blue colormap, portable
pixmap output (no imaging dependency)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

_YELLOW = np.array([255.0, 255.0, 0.0])
_BLUE = np.array([0.0, 0.0, 255.0])


def colormap_yellow_blue(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to RGB, yellow (low) to blue (high)."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    rgb = _YELLOW[None, None, :] * (1.0 - v[..., None]) + _BLUE[None, None, :] * v[..., None]
    return np.round(rgb).astype(np.uint8)


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM (P6)."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, c = rgb.shape
    if c != 3:
        raise ValueError(f"expected (H, W, 3) image, got {rgb.shape}")
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    """Write an (H, W) array in [0, 1] as binary PGM (P5)."""
    g = np.round(np.clip(np.asarray(gray, dtype=np.float64), 0.0, 1.0) * 255)
    g = g.astype(np.uint8)
    h, w = g.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(g.tobytes())
