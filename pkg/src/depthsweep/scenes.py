"""Deterministic rectified-stereo scene renderer with dense ground truth.

Scenes are stacks of textured planes (fronto-parallel or slanted along x)
over a fronto-parallel background.  Surfaces are parameterized by their
left-image projection and carry procedural value-noise textures that can be
evaluated at any real coordinate, so both views sample the same continuous
surface function exactly.  Occlusion is decided by a z-test in the right
view; correspondences leaving the right frame also count as occluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costvolume import DepthMap
from .geometry import StereoRig


# ---------------------------------------------------------------------------
# Procedural texture: seeded value noise, pure function of coordinates

def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    seed_mix = (int(seed) * 0x165667B19E3779F9) & 0xFFFFFFFFFFFFFFFF
    h = ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    h ^= iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    h ^= np.uint64(seed_mix)
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _smooth(t: np.ndarray) -> np.ndarray:
    # quintic smoothstep: C2-continuous, keeps linear-interp error small
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def value_noise(x: np.ndarray, y: np.ndarray, seed: int, wavelength: float) -> np.ndarray:
    """Band-limited value noise in [0, 1], smooth in both coordinates."""
    fx = np.asarray(x, dtype=np.float64) / wavelength
    fy = np.asarray(y, dtype=np.float64) / wavelength
    ix = np.floor(fx).astype(np.int64)
    iy = np.floor(fy).astype(np.int64)
    sx = _smooth(fx - ix)
    sy = _smooth(fy - iy)
    v00 = _hash01(ix, iy, seed)
    v10 = _hash01(ix + 1, iy, seed)
    v01 = _hash01(ix, iy + 1, seed)
    v11 = _hash01(ix + 1, iy + 1, seed)
    top = v00 + (v10 - v00) * sx
    bot = v01 + (v11 - v01) * sx
    return top + (bot - top) * sy


# ---------------------------------------------------------------------------
# Scene description

@dataclass(frozen=True)
class Primitive:
    """Textured plane patch, parameterized by its left-image projection.

    Depth varies linearly from depth_left at column x0 to depth_right at x1
    (equal values make it fronto-parallel).  The extent test is inclusive.
    """

    x0: float
    x1: float
    y0: float
    y1: float
    depth_left: float
    depth_right: float
    wavelength: float = 24.0
    amplitude: float = 0.35
    seed: int = 0

    def depth_at(self, x: np.ndarray) -> np.ndarray:
        if self.x1 == self.x0:
            return np.full_like(np.asarray(x, dtype=np.float64), self.depth_left)
        b = (self.depth_right - self.depth_left) / (self.x1 - self.x0)
        return self.depth_left + b * (np.asarray(x, dtype=np.float64) - self.x0)

    def texture_at(self, x: np.ndarray, y: np.ndarray, seed_offset: int = 0) -> np.ndarray:
        n = value_noise(x, y, self.seed + seed_offset, self.wavelength)
        return 0.5 + self.amplitude * (2.0 * n - 1.0)


@dataclass(frozen=True)
class SceneSpec:
    rig: StereoRig
    primitives: tuple
    background_depth: float = 70.0
    background_wavelength: float = 28.0
    background_amplitude: float = 0.35
    background_seed: int = 9001
    noise_sigma: float = 0.0

    def __post_init__(self):
        for p in self.primitives:
            if not (0 < p.depth_left <= self.background_depth
                    and 0 < p.depth_right <= self.background_depth):
                raise ValueError("primitive depths must lie in (0, background_depth]")
            if not (0 <= p.x0 <= p.x1 < self.rig.width_px
                    and 0 <= p.y0 <= p.y1 < self.rig.height_px):
                raise ValueError("primitive extent must lie within the image")


@dataclass
class Sample:
    left: np.ndarray          # (H, W) float32 in [0, 1]
    right: np.ndarray
    depth_gt: DepthMap        # left-view depth, meters
    occluded: np.ndarray      # (H, W) bool, True where hidden in the right view


def _background(spec: SceneSpec) -> Primitive:
    return Primitive(
        x0=0.0, x1=spec.rig.width_px - 1.0, y0=0.0, y1=spec.rig.height_px - 1.0,
        depth_left=spec.background_depth, depth_right=spec.background_depth,
        wavelength=spec.background_wavelength, amplitude=spec.background_amplitude,
        seed=spec.background_seed,
    )


def _left_surface(spec: SceneSpec, x: np.ndarray, y: np.ndarray, seed_offset: int):
    """Winner depth and texture of the left view at (possibly fractional) coords."""
    depth = np.full(x.shape, spec.background_depth, dtype=np.float64)
    tex = _background(spec).texture_at(x, y, seed_offset)
    # strict per-pixel z-test; ties resolve to the earlier surface in both views
    for p in spec.primitives:
        inside = (x >= p.x0) & (x <= p.x1) & (y >= p.y0) & (y <= p.y1)
        d = p.depth_at(x)
        take = inside & (d < depth)
        if take.any():
            depth[take] = d[take]
            tex[take] = p.texture_at(x, y, seed_offset)[take]
    return depth, tex


def _solve_source_column(p: Primitive, xr: np.ndarray, fb: float):
    """Left-image column(s) of the surface point seen at right column xr.

    Solves xr = x - fb/d(x).  Returns (x_source, valid).  When the slanted
    projection folds, the nearer branch wins.
    """
    eps = 1e-9  # absorbs roundtrip rounding of x -> xr -> x at extent edges
    xr = np.asarray(xr, dtype=np.float64)
    if p.x1 == p.x0 or p.depth_left == p.depth_right:
        x = xr + fb / p.depth_left
        return x, (x >= p.x0 - eps) & (x <= p.x1 + eps)
    b = (p.depth_right - p.depth_left) / (p.x1 - p.x0)
    a = p.depth_left - b * p.x0
    # (x - xr)(a + b x) = fb  ->  b x^2 + (a - b xr) x - (a xr + fb) = 0
    qb = a - b * xr
    qc = -(a * xr + fb)
    disc = qb * qb - 4.0 * b * qc
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    roots = np.stack([(-qb + sq) / (2.0 * b), (-qb - sq) / (2.0 * b)])
    depths = a + b * roots
    root_ok = ok[None] & (roots >= p.x0 - eps) & (roots <= p.x1 + eps) & (depths > 0)
    depths = np.where(root_ok, depths, np.inf)
    pick = np.argmin(depths, axis=0)
    x = np.take_along_axis(roots, pick[None], axis=0)[0]
    valid = np.take_along_axis(root_ok, pick[None], axis=0)[0]
    return x, valid


def _right_surface(spec: SceneSpec, xr: np.ndarray, y: np.ndarray, seed_offset: int,
                   want_texture: bool = True):
    """Winner depth (and texture) of the right view at (possibly fractional) coords."""
    fb = spec.rig.fb
    bg = _background(spec)
    xs = xr + fb / spec.background_depth
    depth = np.full(xr.shape, spec.background_depth, dtype=np.float64)
    tex = bg.texture_at(xs, y, seed_offset) if want_texture else None
    for p in spec.primitives:
        x_src, valid = _solve_source_column(p, xr, fb)
        d = p.depth_at(x_src)
        inside = valid & (y >= p.y0) & (y <= p.y1) & (d > 0)
        take = inside & (d < depth)
        if take.any():
            depth[take] = d[take]
            if want_texture:
                tex[take] = p.texture_at(x_src, y, seed_offset)[take]
    return depth, tex


def generate_scene(spec: SceneSpec, seed: int = 0) -> Sample:
    """Render a stereo pair with dense left-view depth and occlusion mask."""
    rig = spec.rig
    h, w = rig.height_px, rig.width_px
    seed_offset = int(seed) * 1000003
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    depth_l, left = _left_surface(spec, xx, yy, seed_offset)
    _, right = _right_surface(spec, xx, yy, seed_offset)

    # occlusion: the surface point's right-view column must win the z-test
    xr = xx - rig.fb / depth_l
    in_frame = (xr >= 0.0) & (xr <= w - 1)
    depth_r_at, _ = _right_surface(spec, xr, yy, seed_offset, want_texture=False)
    occluded = ~in_frame | (depth_r_at < depth_l - 1e-6)

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, 17]))
        left = left + rng.normal(0.0, spec.noise_sigma, left.shape)
        right = right + rng.normal(0.0, spec.noise_sigma, right.shape)
    left = np.clip(left, 0.0, 1.0).astype(np.float32)
    right = np.clip(right, 0.0, 1.0).astype(np.float32)

    gt = DepthMap(depth=depth_l, valid=np.ones((h, w), dtype=bool))
    return Sample(left=left, right=right, depth_gt=gt, occluded=occluded)


def disparity_map_to_depth_map(dis: np.ndarray, rig: StereoRig) -> DepthMap:
    """Per-pixel triangulation; zero or negative disparities become invalid."""
    dis = np.asarray(dis, dtype=np.float64)
    valid = dis > 0
    depth = np.zeros_like(dis)
    depth[valid] = rig.fb / dis[valid]
    return DepthMap(depth=depth, valid=valid)


# ---------------------------------------------------------------------------
# Procedural dataset specs

# depth strata cycled through by the spec sampler; chosen so all evaluation
# bins of [1, 80) receive pixels
_DEPTH_STRATA = (
    (2.0, 5.0), (5.0, 10.0), (10.0, 20.0), (20.0, 30.0),
    (30.0, 40.0), (40.0, 50.0), (50.0, 60.0), (60.0, 70.0),
)


def _quantize_depth(d: float) -> float:
    """Snap to x.25 / x.75 so no surface sits on a plane decision boundary."""
    return np.floor(d * 2.0) / 2.0 + 0.25


def random_scene_spec(rig: StereoRig, seed: int, n_primitives: int = 8,
                      slant_prob: float = 0.0, noise_sigma: float = 0.0) -> SceneSpec:
    """Sample a scene spec with depth coverage across all evaluation bins."""
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, 31]))
    w, h = rig.width_px, rig.height_px
    prims = []
    strata = [_DEPTH_STRATA[i % len(_DEPTH_STRATA)] for i in range(n_primitives)]
    rng.shuffle(strata)
    for i, (lo, hi) in enumerate(strata):
        depth = _quantize_depth(rng.uniform(lo, hi))
        depth = min(depth, hi - 0.25)
        disp = rig.fb / depth
        x_min = min(disp + 4.0, w - 40.0)
        pw = rng.uniform(30.0, min(90.0, w - x_min - 4.0))
        x0 = rng.uniform(x_min, w - pw - 2.0)
        ph = rng.uniform(24.0, min(72.0, h - 8.0))
        y0 = rng.uniform(2.0, h - ph - 2.0)
        depth_right = depth
        if rng.uniform() < slant_prob:
            depth_right = _quantize_depth(depth * rng.uniform(0.88, 1.12))
            depth_right = float(np.clip(depth_right, max(lo, 2.0), 78.75))
        prims.append(Primitive(
            x0=float(round(x0)), x1=float(round(x0 + pw)),
            y0=float(round(y0)), y1=float(round(y0 + ph)),
            depth_left=depth, depth_right=depth_right,
            wavelength=float(rng.uniform(20.0, 32.0)),
            amplitude=float(rng.uniform(0.28, 0.42)),
            seed=int(rng.integers(0, 2**31)),
        ))
    bg_depth = _quantize_depth(rng.uniform(70.5, 78.5))
    return SceneSpec(
        rig=rig, primitives=tuple(prims),
        background_depth=bg_depth,
        background_wavelength=float(rng.uniform(24.0, 32.0)),
        background_amplitude=float(rng.uniform(0.3, 0.4)),
        background_seed=int(rng.integers(0, 2**31)),
        noise_sigma=noise_sigma,
    )
