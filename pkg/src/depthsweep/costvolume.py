"""Coarse stage: plane-sweep cost volume, aggregation, upsampling, regression.

The cost volume concatenates left features with right features sampled at
each hypothesis column x' = x - fB/d_i (candidate columns are computed in
full-resolution pixels, then divided by the feature scale for sampling).
Aggregation reduces the concatenated channels to a matching logit per plane
with learnable per-channel weights and a spatial box filter; logits are
upsampled, softmax-normalized over planes, and regressed to metric depth by
a soft argmax over plane indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .features import FeatureMap
from .geometry import DepthPlanes, StereoRig

# logit assigned to cells whose candidate column leaves the image: drives the
# softmax probability below 1e-40 without producing NaN
NEG_LOGIT = -1.0e4


@dataclass
class CostVolume:
    """data: (D, H, W, 2C), left features then sampled right features.

    valid[i, y, x] is False where the candidate column is outside the image;
    those cells carry zero features.
    """

    data: np.ndarray
    valid: np.ndarray

    @property
    def planes(self) -> int:
        return self.data.shape[0]


@dataclass
class ScoreVolume:
    """(D, H, W) per-plane scores; logits before normalize_softmax, P after."""

    data: np.ndarray


@dataclass
class DepthMap:
    depth: np.ndarray                 # (H, W) float64, meters
    valid: np.ndarray                 # (H, W) bool
    clamped: np.ndarray | None = None  # set by refine_depth where the floor hit


def _build_volume(f_l: FeatureMap, f_r: FeatureMap, shifts_full_px: np.ndarray) -> CostVolume:
    if f_l.data.shape != f_r.data.shape:
        raise ValueError(
            f"feature shape mismatch: {f_l.data.shape} vs {f_r.data.shape}"
        )
    if f_l.scale != f_r.scale:
        raise ValueError("feature maps must share the same scale")
    c, h, w = f_l.data.shape
    shifts = np.asarray(shifts_full_px, dtype=np.float64) / f_l.scale
    x = np.arange(w, dtype=np.float64)
    cols = np.broadcast_to(
        (x[None, :] - shifts[:, None])[:, None, :], (len(shifts), h, w)
    )
    feat_r = np.ascontiguousarray(f_r.data, dtype=np.float64)
    sampled, valid = K.sample_cols(feat_r, np.ascontiguousarray(cols))
    d = len(shifts)
    data = np.empty((d, h, w, 2 * c), dtype=np.float64)
    data[..., :c] = np.moveaxis(f_l.data.astype(np.float64), 0, -1)[None]
    data[..., c:] = np.moveaxis(sampled, 1, -1)
    data[..., :c] *= valid[..., None]
    return CostVolume(data=data, valid=valid)


def build_depth_cost_volume(
    f_l: FeatureMap, f_r: FeatureMap, rig: StereoRig, planes: DepthPlanes
) -> CostVolume:
    """Plane-sweep volume with candidates uniformly sampled in depth."""
    return _build_volume(f_l, f_r, rig.fb / planes.planes)


def build_disparity_cost_volume(
    f_l: FeatureMap, f_r: FeatureMap, levels_px: np.ndarray
) -> CostVolume:
    """Baseline variant: candidates at uniformly spaced disparity levels (full-res px)."""
    return _build_volume(f_l, f_r, np.asarray(levels_px, dtype=np.float64))


def disparity_levels(rig: StereoRig, planes: DepthPlanes) -> np.ndarray:
    """Uniform disparity sampling of the same depth range with the same budget."""
    lo = rig.fb / planes.d_max
    hi = rig.fb / planes.d_min
    return lo + (hi - lo) / planes.count * np.arange(planes.count, dtype=np.float64)


def aggregate_costs(
    vol: CostVolume, weights: np.ndarray, bias: float = 0.0, radius: int = 2
) -> ScoreVolume:
    """Reduce the concatenated volume to per-plane matching logits.

    weights has one entry per concatenated channel (2C); each channel is
    paired with its counterpart in the other half, so the logit is
    -sum_c w_c * |data_c - data_{(c+C) mod 2C}|, box-filtered spatially per
    plane (radius `radius`), plus bias.  Invalid cells get NEG_LOGIT.
    """
    two_c = vol.data.shape[-1]
    c = two_c // 2
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (two_c,):
        raise ValueError(f"expected {two_c} weights, got shape {weights.shape}")
    absdiff = np.abs(vol.data[..., :c] - vol.data[..., c:])
    eff = weights[:c] + weights[c:]
    weighted = absdiff @ eff
    logits = -K.box_mean(weighted, radius) + bias
    logits[~vol.valid] = NEG_LOGIT
    return ScoreVolume(data=logits)


def pairwise_absdiff_volume(vol: CostVolume, radius: int = 2) -> np.ndarray:
    """Box-filtered |left - right| per channel: (D, C, H, W).

    This is the parameter-independent part of aggregate_costs; training
    caches it because logits are linear in the aggregation weights.
    """
    c = vol.data.shape[-1] // 2
    absdiff = np.abs(vol.data[..., :c] - vol.data[..., c:])
    return np.ascontiguousarray(
        np.moveaxis(K.box_mean(np.moveaxis(absdiff, -1, 1), radius), 0, 0)
    )


def upsample_trilinear(sv: ScoreVolume, factor: int = 4) -> ScoreVolume:
    """Spatially bilinear upsampling; the plane dimension is unchanged."""
    return ScoreVolume(data=K.upsample_bilinear(np.asarray(sv.data, dtype=np.float64), factor))


def normalize_softmax(sv: ScoreVolume) -> ScoreVolume:
    """Per-pixel softmax over the plane dimension, max-subtracted for stability."""
    logits = np.asarray(sv.data, dtype=np.float64)
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return ScoreVolume(data=e / e.sum(axis=0, keepdims=True))


def soft_argmax_index(p: ScoreVolume) -> np.ndarray:
    """Expected plane index per pixel."""
    d = p.data.shape[0]
    idx = np.arange(d, dtype=np.float64)
    return np.tensordot(idx, p.data, axes=(0, 0))


def soft_argmax_depth(p: ScoreVolume, planes: DepthPlanes, valid: np.ndarray | None = None) -> DepthMap:
    """Expected plane index mapped linearly to meters via the plane spacing."""
    ibar = soft_argmax_index(p)
    depth = planes.d_min + ibar * planes.step
    if valid is None:
        valid = np.ones(depth.shape, dtype=bool)
    return DepthMap(depth=depth, valid=valid)


def volume_column_validity(vol: CostVolume) -> np.ndarray:
    """(H, W) mask of pixels with at least one valid plane."""
    return vol.valid.any(axis=0)
