"""Stereo rig geometry: triangulation, depth-plane sampling, error propagation.

All conversions live on the rectified-stereo relation depth = f*B/disparity
with the left image as reference: the match of left pixel (x, y) lies at
(x - disparity, y) in the right image.  Geometry is computed in double
precision throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class StereoRig:
    """Calibrated rectified camera pair.

    baseline_m: distance between camera centers in meters.
    focal_px:   focal length in pixels (shared by both cameras).
    width_px, height_px: image dimensions in pixels.
    """

    baseline_m: float
    focal_px: float
    width_px: int
    height_px: int

    def __post_init__(self):
        if not self.baseline_m > 0:
            raise ValueError(f"baseline_m must be > 0, got {self.baseline_m}")
        if not self.focal_px > 0:
            raise ValueError(f"focal_px must be > 0, got {self.focal_px}")
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("image dimensions must be >= 1 pixel")

    @property
    def fb(self) -> float:
        """focal_px * baseline_m, the triangulation constant in px*m."""
        return self.focal_px * self.baseline_m


# Rig presets: (baseline_m, focal_px).
RIG_PRESETS = {
    "sceneflow": (0.27, 1050.0),
    "drivingstereo": (0.54, 1003.0),
}


def make_rig(preset: str, width_px: int, height_px: int) -> StereoRig:
    if preset not in RIG_PRESETS:
        raise ValueError(f"unknown rig preset {preset!r}; known: {sorted(RIG_PRESETS)}")
    b, f = RIG_PRESETS[preset]
    return StereoRig(baseline_m=b, focal_px=f, width_px=width_px, height_px=height_px)


@dataclass(frozen=True)
class DepthPlanes:
    """Uniform fronto-parallel depth sampling over [d_min, d_max).

    planes[i] = d_min + i * (d_max - d_min) / count; the last plane sits one
    step below d_max.
    """

    d_min: float
    d_max: float
    count: int
    planes: np.ndarray = field(repr=False)

    @property
    def step(self) -> float:
        return (self.d_max - self.d_min) / self.count


def sample_depth_planes(d_min: float, d_max: float, count: int) -> DepthPlanes:
    """Sample `count` depth planes uniformly, starting at d_min, excluding d_max."""
    if not (0 < d_min < d_max):
        raise ValueError(f"need 0 < d_min < d_max, got ({d_min}, {d_max})")
    if count < 2:
        raise ValueError(f"need at least 2 planes, got {count}")
    step = (d_max - d_min) / count
    planes = d_min + step * np.arange(count, dtype=np.float64)
    planes.setflags(write=False)
    return DepthPlanes(d_min=float(d_min), d_max=float(d_max), count=int(count), planes=planes)


def _check_positive(value, name):
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(arr > 0):
        raise ValueError(f"{name} must be > 0")
    return arr


def depth_to_disparity(rig: StereoRig, depth):
    """disparity = f*B / depth (pixels).  Accepts scalars or arrays."""
    d = _check_positive(depth, "depth")
    out = rig.fb / d
    return float(out) if np.isscalar(depth) else out


def disparity_to_depth(rig: StereoRig, disparity):
    """depth = f*B / disparity (meters).  Accepts scalars or arrays."""
    dis = _check_positive(disparity, "disparity")
    out = rig.fb / dis
    return float(out) if np.isscalar(disparity) else out


def candidate_disparity(rig: StereoRig, plane_depth):
    """Disparity of the matching candidate for a depth plane.

    The candidate for left pixel (x, y) at plane depth d lies at column
    x - candidate_disparity(rig, d) in the right image.
    """
    return depth_to_disparity(rig, plane_depth)


def depth_error_from_disparity_error(rig: StereoRig, depth_gt, disparity_error):
    """Depth error caused by a disparity error at a given ground-truth depth.

    Predicted disparity is gt disparity minus the error; raises when the
    prediction would be non-positive (depth beyond measurable range).
    """
    d_gt = _check_positive(depth_gt, "depth_gt")
    e = np.asarray(disparity_error, dtype=np.float64)
    dis_gt = rig.fb / d_gt
    dis_pred = dis_gt - e
    if not np.all(dis_pred > 0):
        raise ValueError("predicted disparity <= 0: depth beyond measurable range")
    out = np.abs(rig.fb / dis_gt - rig.fb / dis_pred)
    scalar = np.isscalar(depth_gt) and np.isscalar(disparity_error)
    return float(out) if scalar else out
