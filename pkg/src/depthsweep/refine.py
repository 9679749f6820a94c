"""Adaptive-grained refinement around the coarse depth.

The coarse prediction warps the right features into the left view; the
reconstruction residual feeds two small heads: a scale head (per-pixel
matching scale SU, meters per candidate step) and a feature-weight head
(positive per-channel, per-candidate weights FU).  Five candidates at
depth_coarse + i*SU (i in -2..2) are scored by an FU-weighted squared
residual, softmax-normalized, and combined into a metric offset bounded by
2*SU.  Candidates may alternatively be placed at literal pixel offsets
(`mode="pixel"`), which is the configuration used by the disparity-space
baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .costvolume import NEG_LOGIT, DepthMap, ScoreVolume
from .features import FeatureMap
from .geometry import StereoRig

CANDIDATE_STEPS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
DEPTH_FLOOR_M = 0.1


@dataclass
class SUMap:
    """Per-pixel matching scale: candidate step size in value units (> 0)."""

    su: np.ndarray  # (H, W) float64


@dataclass
class FUMap:
    """Positive matching weights 1/sigma_f^2, one per unfolded channel and candidate."""

    fu: np.ndarray  # (3C, 5, H, W) float64


@dataclass
class CandidateFeatures:
    f_s: np.ndarray        # (C, 5, H, W) residuals f_l - f_r(candidate)
    valid: np.ndarray      # (5, H, W) candidate inside the image
    columns: np.ndarray    # (5, H, W) candidate columns, for diagnostics


@dataclass
class OffsetMap:
    offset: np.ndarray     # (H, W) float64, value units (meters in depth mode)


@dataclass(frozen=True)
class SuHeadParams:
    """su = softplus(w_e . pool(|f_u|) + w_d * coarse + b), pool = box mean."""

    w_e: np.ndarray
    w_d: float
    b: float

    @staticmethod
    def constant(channels: int, su0: float) -> "SuHeadParams":
        return SuHeadParams(
            w_e=np.zeros(channels), w_d=0.0, b=float(np.log(np.expm1(su0)))
        )


@dataclass(frozen=True)
class FuHeadParams:
    """fu[m,i] = softplus(v[m] . pool(|f_u|) + v_s * su + beta[m,i])."""

    v: np.ndarray      # (3C, C)
    v_s: float
    beta: np.ndarray   # (3C, 5)

    @staticmethod
    def constant(channels: int, fu0: float) -> "FuHeadParams":
        m = 3 * channels
        return FuHeadParams(
            v=np.zeros((m, channels)), v_s=0.0,
            beta=np.full((m, 5), float(np.log(np.expm1(fu0)))),
        )


@dataclass(frozen=True)
class CompressionParams:
    """Linear map over the unfolded channel axis: (C, 3C) matrix plus bias."""

    k: np.ndarray
    bias: np.ndarray


def warp_right_to_left(f_r: FeatureMap, depth: DepthMap, rig: StereoRig):
    """Sample right features at x - fB/depth per pixel.

    Returns (FeatureMap, valid): zero features and False validity where the
    source column leaves the image or the depth is invalid.
    """
    feat = np.ascontiguousarray(f_r.data, dtype=np.float64)
    _, h, w = feat.shape
    x = np.arange(w, dtype=np.float64)[None, :]
    safe = np.where(depth.valid & (depth.depth > 0), depth.depth, 1.0)
    cols = x - (rig.fb / f_r.scale) / safe
    vals, valid = K.sample_cols(feat, cols[None])
    valid = valid[0] & depth.valid & (depth.depth > 0)
    out = vals[0]
    out *= valid[None]
    return FeatureMap(data=out, scale=f_r.scale), valid


def compute_uncertainty_feature(f_l: FeatureMap, warped: FeatureMap) -> np.ndarray:
    """Reconstruction residual f_l - warped(f_r), elementwise."""
    if f_l.data.shape != warped.data.shape:
        raise ValueError("shape mismatch between left and warped features")
    return np.asarray(f_l.data, dtype=np.float64) - np.asarray(warped.data, dtype=np.float64)


def pooled_error(f_u: np.ndarray, radius: int = 2) -> np.ndarray:
    """Box-mean of |f_u| per channel; the error statistic both heads consume."""
    return K.box_mean(np.abs(f_u), radius)


def estimate_su(f_u: np.ndarray, depth_coarse: DepthMap, params: SuHeadParams,
                pool_radius: int = 2) -> SUMap:
    e = pooled_error(f_u, pool_radius)
    arg = np.tensordot(np.asarray(params.w_e, dtype=np.float64), e, axes=(0, 0))
    arg += params.w_d * depth_coarse.depth + params.b
    return SUMap(su=K.softplus(arg))


def estimate_fu(f_u: np.ndarray, su: SUMap, params: FuHeadParams,
                pool_radius: int = 2) -> FUMap:
    e = pooled_error(f_u, pool_radius)
    arg = np.tensordot(np.asarray(params.v, dtype=np.float64), e, axes=(1, 0))
    arg = arg[:, None] + params.v_s * su.su[None, None] + np.asarray(
        params.beta, dtype=np.float64)[:, :, None, None]
    return FUMap(fu=K.softplus(arg))


def candidate_values(center: np.ndarray, su: np.ndarray, floor: float) -> np.ndarray:
    """(5, H, W) candidate depths/disparities: center + i*su, floored."""
    return np.maximum(center[None] + CANDIDATE_STEPS[:, None, None] * su[None], floor)


def candidate_columns(values: np.ndarray, rig: StereoRig, mode: str, width: int) -> np.ndarray:
    x = np.arange(width, dtype=np.float64)[None, None, :]
    if mode == "depth":
        return x - rig.fb / values
    if mode in ("pixel", "disparity"):
        return x - values
    raise ValueError(f"unknown candidate mode {mode!r}")


def build_similarity_features(
    f_l: FeatureMap, f_r: FeatureMap, depth_coarse: DepthMap, su: SUMap,
    rig: StereoRig, mode: str = "depth", floor: float = DEPTH_FLOOR_M,
) -> CandidateFeatures:
    """Residuals of the five candidates placed symmetrically around the coarse value.

    In depth mode candidate i sits at depth_coarse + i*SU projected through
    the rig; in pixel mode the interpretation of depth_coarse/SU is a
    disparity and candidates shift by i*SU pixels directly.
    """
    feat_r = np.ascontiguousarray(f_r.data, dtype=np.float64)
    c, h, w = feat_r.shape
    vals = candidate_values(depth_coarse.depth, su.su, floor)
    cols = candidate_columns(vals, rig, mode, w)
    sampled, valid = K.sample_cols(feat_r, np.ascontiguousarray(cols))
    valid &= depth_coarse.valid[None]
    sampled *= depth_coarse.valid[None, None]  # mirror the warp: invalid -> zero
    f_s = np.asarray(f_l.data, dtype=np.float64)[:, None] - np.moveaxis(sampled, 1, 0)
    return CandidateFeatures(f_s=np.ascontiguousarray(f_s), valid=valid, columns=cols)


def unfold_candidates(f_s: np.ndarray) -> np.ndarray:
    """Stack each candidate with its neighbors: (C,5,H,W) -> (3C,5,H,W).

    Block order is (i-1, i, i+1) with end candidates replicated.
    """
    c, k = f_s.shape[:2]
    if k != 5:
        raise ValueError(f"expected 5 candidates, got {k}")
    prev_idx = np.maximum(np.arange(k) - 1, 0)
    next_idx = np.minimum(np.arange(k) + 1, k - 1)
    return np.concatenate([f_s[:, prev_idx], f_s, f_s[:, next_idx]], axis=0)


def score_candidates(
    fs_unfolded: np.ndarray, fu: FUMap, params: CompressionParams,
    valid: np.ndarray | None = None,
) -> ScoreVolume:
    """FU-weighted squared-residual scores, softmax-normalized over candidates.

    logit_i = sum_c [ Kmat @ (-(f'_s)^2 * FU) ]_{c,i} + sum_c bias_c; invalid
    candidates are forced to NEG_LOGIT before the softmax.
    """
    weighted = -(fs_unfolded * fs_unfolded) * fu.fu
    kcol = np.asarray(params.k, dtype=np.float64).sum(axis=0)
    logits = np.tensordot(kcol, weighted, axes=(0, 0))
    logits += np.asarray(params.bias, dtype=np.float64).sum()
    if valid is not None:
        logits = np.where(valid, logits, NEG_LOGIT)
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return ScoreVolume(data=e / e.sum(axis=0, keepdims=True))


def compute_offset(scores: ScoreVolume, su: SUMap) -> OffsetMap:
    """offset = SU * sum_i i * s_i; bounded by +/- 2 SU by construction."""
    drift = np.tensordot(CANDIDATE_STEPS, scores.data, axes=(0, 0))
    return OffsetMap(offset=su.su * drift)


def refine_depth(depth_coarse: DepthMap, offset: OffsetMap,
                 floor: float = DEPTH_FLOOR_M) -> DepthMap:
    """Final depth = coarse + offset, floored at `floor` meters."""
    raw = depth_coarse.depth + offset.offset
    clamped = raw < floor
    return DepthMap(
        depth=np.maximum(raw, floor),
        valid=depth_coarse.valid.copy(),
        clamped=clamped,
    )


def gaussian_similarity_score(mu_l, mu_r, var_l, var_r, cov: float = 0.0) -> float:
    """Log-density of zero feature difference under independent Gaussians.

    Reference implementation of the probabilistic similarity the candidate
    scoring realizes: with sigma^2_sum = var_l + var_r - 2 cov per channel,
    returns -1/2 sum_c [ (mu_l - mu_r)^2 / sigma^2_sum + log sigma^2_sum ]
    - (C/2) log(2 pi).
    """
    mu_l = np.atleast_1d(np.asarray(mu_l, dtype=np.float64))
    mu_r = np.atleast_1d(np.asarray(mu_r, dtype=np.float64))
    var_l = np.atleast_1d(np.asarray(var_l, dtype=np.float64))
    var_r = np.atleast_1d(np.asarray(var_r, dtype=np.float64))
    sig2 = var_l + var_r - 2.0 * cov
    if not np.all(sig2 > 0):
        raise ValueError("var_l + var_r - 2*cov must be positive per channel")
    c = mu_l.shape[0]
    delta = mu_l - mu_r
    return float(
        -0.5 * np.sum(delta * delta / sig2 + np.log(sig2)) - 0.5 * c * np.log(2.0 * np.pi)
    )
