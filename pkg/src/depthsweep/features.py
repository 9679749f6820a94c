"""Deterministic handcrafted matching features.

Two extractors share one channel set: normalized grayscale, Sobel x/y
gradients, box-blurred intensity at several radii, local standard deviation,
and census density (fraction of 8-neighbors darker than the center).  The
coarse extractor runs on a 4x box-downsampled image; the fine extractor runs
at full resolution.  Replicate padding everywhere; every windowed channel is
computed as an independent per-pixel dot product so integer shifts of the
input shift interior outputs bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64) / 4.0
_SOBEL_Y = _SOBEL_X.T.copy()


@dataclass(frozen=True)
class ExtractorConfig:
    gray: bool = True
    sobel: bool = True
    blur_radii: tuple = (1, 2, 4)
    std_radius: int = 2
    census: bool = True

    @property
    def channel_count(self) -> int:
        n = int(self.gray) + 2 * int(self.sobel) + len(self.blur_radii)
        n += int(self.std_radius > 0) + int(self.census)
        return n


@dataclass
class FeatureMap:
    """Per-pixel feature channels; scale is the downsample factor vs the source image."""

    data: np.ndarray  # (C, H, W) float32
    scale: int

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def to_luma(img: np.ndarray) -> np.ndarray:
    """Collapse an (H,W) or (H,W,3) image in [0,1] to a float64 intensity map."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        r, g, b = LUMA_WEIGHTS
        return r * arr[..., 0] + g * arr[..., 1] + b * arr[..., 2]
    raise ValueError(f"expected 1- or 3-channel image, got shape {arr.shape}")


def _box(g: np.ndarray, radius: int) -> np.ndarray:
    n = 2 * radius + 1
    w = np.full(n, 1.0 / n)
    out = ndimage.correlate1d(g, w, axis=0, mode="nearest")
    return ndimage.correlate1d(out, w, axis=1, mode="nearest")


def _census_density(g: np.ndarray) -> np.ndarray:
    gp = np.pad(g, 1, mode="edge")
    h, w = g.shape
    darker = np.zeros((h, w), dtype=np.float64)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = gp[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
            darker += nb < g
    return darker / 8.0


def compute_channels(g: np.ndarray, cfg: ExtractorConfig) -> np.ndarray:
    """Stack the configured channels of an intensity map; float32 (C, H, W)."""
    chans = []
    if cfg.gray:
        chans.append(g)
    if cfg.sobel:
        chans.append(ndimage.correlate(g, _SOBEL_X, mode="nearest"))
        chans.append(ndimage.correlate(g, _SOBEL_Y, mode="nearest"))
    for r in cfg.blur_radii:
        chans.append(_box(g, int(r)))
    if cfg.std_radius > 0:
        m = _box(g, cfg.std_radius)
        m2 = _box(g * g, cfg.std_radius)
        chans.append(np.sqrt(np.maximum(m2 - m * m, 0.0)))
    if cfg.census:
        chans.append(_census_density(g))
    if not chans:
        raise ValueError("extractor config enables no channels")
    return np.stack(chans).astype(np.float32)


def downsample4(g: np.ndarray) -> np.ndarray:
    """4x box downsampling by non-overlapping block means."""
    h, w = g.shape
    if h % 4 or w % 4:
        raise ValueError(f"dimensions must be divisible by 4, got {h}x{w}")
    return g.reshape(h // 4, 4, w // 4, 4).mean(axis=(1, 3))


def extract_coarse_features(img: np.ndarray, cfg: ExtractorConfig = ExtractorConfig()) -> FeatureMap:
    """Quarter-resolution matching features for the coarse plane sweep."""
    g = to_luma(img)
    if g.shape[0] % 4 or g.shape[1] % 4:
        raise ValueError(
            f"image dimensions must be divisible by 4, got {g.shape[0]}x{g.shape[1]}"
        )
    return FeatureMap(data=compute_channels(downsample4(g), cfg), scale=4)


def extract_fine_features(img: np.ndarray, cfg: ExtractorConfig = ExtractorConfig()) -> FeatureMap:
    """Full-resolution features with multiple receptive fields for refinement."""
    return FeatureMap(data=compute_channels(to_luma(img), cfg), scale=1)
