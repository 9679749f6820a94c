"""End-to-end differentiable pipeline: plane sweep -> coarse value -> refinement.

The trainable surface is small (a few hundred scalars in four named groups),
so gradients are derived by hand as a reverse pass mirroring the forward
computation; central finite differences over the same loss serve as the
correctness oracle in the tests.  The pipeline is generic over the matching
value space: "depth" (plane sweep uniform in depth, supervised by depth) or
"disparity" (the ablation baseline: uniform disparity levels, supervised by
disparity).

Everything here computes in float64: the finite-difference contract
(rel. err < 1e-4) is not attainable through a float32 forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .costvolume import (
    NEG_LOGIT,
    CostVolume,
    DepthMap,
    build_depth_cost_volume,
    build_disparity_cost_volume,
    disparity_levels,
    pairwise_absdiff_volume,
)
from .features import ExtractorConfig, extract_coarse_features, extract_fine_features
from .geometry import DepthPlanes, StereoRig
from .refine import CANDIDATE_STEPS
from .scenes import Sample

GROUP_NAMES = ("aggregation", "compression", "su_head", "fu_head")


@dataclass
class Params:
    """Named trainable groups; shapes fixed by the channel counts."""

    agg_w: np.ndarray    # (2C,)
    agg_b: float
    comp_k: np.ndarray   # (Cf, 3Cf)
    comp_b: np.ndarray   # (Cf,)
    su_we: np.ndarray    # (Cf,)
    su_wd: float
    su_b: float
    fu_v: np.ndarray     # (3Cf, Cf)
    fu_vs: float
    fu_beta: np.ndarray  # (3Cf, 5)

    @staticmethod
    def init(c_coarse: int, c_fine: int, su0: float = 5.0, fu0: float = 1.0,
             agg_w0: float = 1.0, comp_k0: float = 2.0) -> "Params":
        """Defaults realize the fixed-head phase: SU = su0, FU = fu0 everywhere."""
        m = 3 * c_fine
        comp_k = np.zeros((c_fine, m))
        comp_k[np.arange(c_fine), c_fine + np.arange(c_fine)] = comp_k0
        return Params(
            agg_w=np.full(2 * c_coarse, agg_w0),
            agg_b=0.0,
            comp_k=comp_k,
            comp_b=np.zeros(c_fine),
            su_we=np.zeros(c_fine),
            su_wd=0.0,
            su_b=float(np.log(np.expm1(su0))),
            fu_v=np.zeros((m, c_fine)),
            fu_vs=0.0,
            fu_beta=np.full((m, 5), float(np.log(np.expm1(fu0)))),
        )

    # -- group <-> flat vector plumbing ------------------------------------

    def _group_arrays(self, name: str):
        return {
            "aggregation": (("agg_w", None), ("agg_b", ())),
            "compression": (("comp_k", None), ("comp_b", None)),
            "su_head": (("su_we", None), ("su_wd", ()), ("su_b", ())),
            "fu_head": (("fu_v", None), ("fu_vs", ()), ("fu_beta", None)),
        }[name]

    def group_vector(self, name: str) -> np.ndarray:
        parts = []
        for attr, scalar in self._group_arrays(name):
            v = getattr(self, attr)
            parts.append(np.atleast_1d(np.asarray(v, dtype=np.float64)).ravel())
        return np.concatenate(parts)

    def with_group_vector(self, name: str, vec: np.ndarray) -> "Params":
        out = self.copy()
        i = 0
        for attr, scalar in self._group_arrays(name):
            cur = getattr(out, attr)
            if scalar == ():
                setattr(out, attr, float(vec[i]))
                i += 1
            else:
                n = cur.size
                setattr(out, attr, vec[i:i + n].reshape(cur.shape).copy())
                i += n
        if i != len(vec):
            raise ValueError(f"group {name}: expected {i} values, got {len(vec)}")
        return out

    def to_vector(self, groups=GROUP_NAMES) -> np.ndarray:
        return np.concatenate([self.group_vector(g) for g in groups])

    def with_vector(self, vec: np.ndarray, groups=GROUP_NAMES) -> "Params":
        out = self
        i = 0
        for g in groups:
            n = len(self.group_vector(g))
            out = out.with_group_vector(g, vec[i:i + n])
            i += n
        return out

    def copy(self) -> "Params":
        return Params(
            agg_w=self.agg_w.copy(), agg_b=self.agg_b,
            comp_k=self.comp_k.copy(), comp_b=self.comp_b.copy(),
            su_we=self.su_we.copy(), su_wd=self.su_wd, su_b=self.su_b,
            fu_v=self.fu_v.copy(), fu_vs=self.fu_vs, fu_beta=self.fu_beta.copy(),
        )

    def to_groups(self) -> dict:
        return {g: self.group_vector(g) for g in GROUP_NAMES}

    @staticmethod
    def from_groups(groups: dict, c_coarse: int, c_fine: int) -> "Params":
        p = Params.init(c_coarse, c_fine)
        for g in GROUP_NAMES:
            p = p.with_group_vector(g, np.asarray(groups[g], dtype=np.float64))
        return p


@dataclass
class PipelineConfig:
    space: str = "depth"              # "depth" | "disparity"
    candidate_mode: str = "value"     # "value" | "pixel" (literal +/- i columns)
    agg_radius: int = 2
    pool_radius: int = 2
    value_floor: float = 0.1          # meters in depth space, pixels in disparity
    loss_coarse: float = 1.0
    loss_refine: float = 1.0
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    mask_occluded: bool = True

    def floor_for_space(self) -> float:
        if self.space == "disparity" and self.value_floor >= 0.1:
            return 1e-3
        return self.value_floor


@dataclass
class SampleCache:
    """Parameter-independent per-sample precomputation."""

    apair: np.ndarray        # (D, C, h, w) box-filtered |left-right| per channel
    valid_q: np.ndarray      # (D, h, w) candidate-column validity
    valid_px: np.ndarray     # (H, W) any-plane validity at full resolution
    g_l: np.ndarray          # (Cf, H, W) fine features, float64
    g_r: np.ndarray
    gt: np.ndarray | None    # (H, W) target value map (depth or disparity)
    mask: np.ndarray | None  # (H, W) supervision mask


class Pipeline:
    """Couples a rig, a hypothesis grid, and the refinement configuration."""

    def __init__(self, rig: StereoRig, planes: DepthPlanes, cfg: PipelineConfig | None = None):
        self.rig = rig
        self.planes = planes
        self.cfg = cfg or PipelineConfig()
        if self.cfg.space == "depth":
            self.values = planes.planes
        elif self.cfg.space == "disparity":
            self.values = disparity_levels(rig, planes)
        else:
            raise ValueError(f"unknown value space {self.cfg.space!r}")
        self.v0 = float(self.values[0])
        self.step = float(self.values[1] - self.values[0])
        self.floor = self.cfg.floor_for_space()

    # -- geometry helpers ---------------------------------------------------

    def _project(self, v: np.ndarray) -> np.ndarray:
        """Value -> full-resolution disparity in pixels."""
        if self.cfg.space == "depth":
            return self.rig.fb / v
        return v

    def default_params(self, su0: float | None = None, fu0: float = 1.0,
                       agg_w0: float = 1.0) -> Params:
        c = self.cfg.extractor.channel_count
        if su0 is None:
            su0 = 5.0 if self.cfg.space == "depth" else 1.0
        return Params.init(c, c, su0=su0, fu0=fu0, agg_w0=agg_w0)

    # -- precomputation -----------------------------------------------------

    def build_volume(self, f_l, f_r) -> CostVolume:
        if self.cfg.space == "depth":
            return build_depth_cost_volume(f_l, f_r, self.rig, self.planes)
        return build_disparity_cost_volume(f_l, f_r, self.values)

    def precompute(self, sample: Sample) -> SampleCache:
        cache = self.precompute_images(sample.left, sample.right)
        gt_depth = sample.depth_gt
        if self.cfg.space == "depth":
            gt = gt_depth.depth.astype(np.float64)
        else:
            safe = np.where(gt_depth.depth > 0, gt_depth.depth, 1.0)
            gt = self.rig.fb / safe
        mask = gt_depth.valid & (gt_depth.depth > 0) & cache.valid_px
        if self.cfg.mask_occluded:
            mask &= ~sample.occluded
        cache.gt = gt
        cache.mask = mask
        return cache

    def precompute_images(self, left: np.ndarray, right: np.ndarray) -> SampleCache:
        exc = self.cfg.extractor
        fl_c = extract_coarse_features(left, exc)
        fr_c = extract_coarse_features(right, exc)
        vol = self.build_volume(fl_c, fr_c)
        apair = pairwise_absdiff_volume(vol, self.cfg.agg_radius)
        valid_q = vol.valid
        valid_px = np.repeat(np.repeat(valid_q.any(axis=0), 4, axis=0), 4, axis=1)
        g_l = extract_fine_features(left, exc).data.astype(np.float64)
        g_r = extract_fine_features(right, exc).data.astype(np.float64)
        return SampleCache(
            apair=apair, valid_q=valid_q, valid_px=valid_px,
            g_l=np.ascontiguousarray(g_l), g_r=np.ascontiguousarray(g_r),
            gt=None, mask=None,
        )

    # -- forward ------------------------------------------------------------

    def forward(self, cache: SampleCache, params: Params, want_aux: bool = False):
        """Return (loss, aux); aux carries every intermediate the backward needs."""
        cfg = self.cfg
        c = cache.apair.shape[1]
        co, H, W = cache.g_l.shape
        x_full = np.arange(W, dtype=np.float64)

        # coarse stage: logits are linear in the aggregation weights
        eff = params.agg_w[:c] + params.agg_w[c:]
        ql = -np.tensordot(eff, cache.apair, axes=(0, 1)) + params.agg_b
        ql[~cache.valid_q] = NEG_LOGIT
        ql = np.ascontiguousarray(ql)
        ibar = K.coarse_expect_fwd(ql, 4)
        value_c = self.v0 + ibar * self.step

        # warp by the coarse value
        safe_c = np.maximum(value_c, self.floor)
        warp_col = x_full[None, :] - self._project(safe_c)
        w0, wcol_ok = K.sample_cols(cache.g_r, warp_col[None])
        wvalid = wcol_ok[0] & cache.valid_px
        w0 = w0[0] * wvalid[None]
        f_u = cache.g_l - w0
        e_pool = K.box_mean(np.abs(f_u), cfg.pool_radius)

        # scale head
        su_arg = np.tensordot(params.su_we, e_pool, axes=(0, 0)) \
            + params.su_wd * value_c + params.su_b
        su = K.softplus(su_arg)

        # candidates
        if cfg.candidate_mode == "pixel":
            cand_cols = warp_col[None] + CANDIDATE_STEPS[:, None, None]
            v_k = None
            gate_k = None
        else:
            pre_k = value_c[None] + CANDIDATE_STEPS[:, None, None] * su[None]
            gate_k = pre_k > self.floor
            v_k = np.maximum(pre_k, self.floor)
            cand_cols = x_full[None, None, :] - self._project(v_k)
        cand_cols = np.ascontiguousarray(cand_cols)
        s_feat, ccol_ok = K.sample_cols(cache.g_r, cand_cols)
        cvalid = ccol_ok & cache.valid_px[None]
        s_feat *= cache.valid_px[None, None]
        f_s = cache.g_l[:, None] - np.moveaxis(s_feat, 1, 0)   # (Co, 5, H, W)

        prev_idx = np.array([0, 0, 1, 2, 3])
        next_idx = np.array([1, 2, 3, 4, 4])
        fp = np.concatenate([f_s[:, prev_idx], f_s, f_s[:, next_idx]], axis=0)

        # feature-weight head
        earg = np.tensordot(params.fu_v, e_pool, axes=(1, 0))   # (M, H, W)
        fu_arg = earg[:, None] + params.fu_vs * su[None, None] \
            + params.fu_beta[:, :, None, None]
        fu = K.softplus(fu_arg)

        wt = -(fp * fp) * fu
        kcol = params.comp_k.sum(axis=0)
        z = np.tensordot(kcol, wt, axes=(0, 0)) + params.comp_b.sum()
        z = np.where(cvalid, z, NEG_LOGIT)
        zs = z - z.max(axis=0, keepdims=True)
        es = np.exp(zs)
        s = es / es.sum(axis=0, keepdims=True)

        drift = np.tensordot(CANDIDATE_STEPS, s, axes=(0, 0))
        offset = su * drift
        raw_ref = value_c + offset
        gate_ref = raw_ref > self.floor
        value_ref = np.maximum(raw_ref, self.floor)

        if cache.mask is not None and cache.gt is not None:
            n = int(cache.mask.sum())
            if n == 0:
                raise ValueError("empty supervision mask")
            loss_c = float(np.abs(value_c - cache.gt)[cache.mask].sum() / n)
            loss_r = float(np.abs(value_ref - cache.gt)[cache.mask].sum() / n)
            loss = cfg.loss_coarse * loss_c + cfg.loss_refine * loss_r
        else:
            n, loss_c, loss_r, loss = 0, 0.0, 0.0, 0.0

        if not want_aux:
            return loss, None
        aux = dict(
            ql=ql, ibar=ibar, value_c=value_c, safe_c=safe_c, warp_col=warp_col,
            wvalid=wvalid, f_u=f_u, e_pool=e_pool, su_arg=su_arg, su=su,
            v_k=v_k, gate_k=gate_k, cand_cols=cand_cols, cvalid=cvalid,
            f_s=f_s, fp=fp, fu_arg=fu_arg, fu=fu, wt=wt, z=z, s=s,
            drift=drift, offset=offset, gate_ref=gate_ref, value_ref=value_ref,
            n=n, loss_c=loss_c, loss_r=loss_r, prev_idx=prev_idx, next_idx=next_idx,
        )
        return loss, aux

    # -- backward -----------------------------------------------------------

    def loss_and_grad(self, cache: SampleCache, params: Params):
        """Analytic gradient of the scalar loss w.r.t. every parameter group."""
        loss, a = self.forward(cache, params, want_aux=True)
        cfg = self.cfg
        c = cache.apair.shape[1]
        n = a["n"]
        mask = cache.mask

        g = Params.init(c, cache.g_l.shape[0])
        g = g.with_vector(np.zeros(len(g.to_vector())))

        # refined-loss head
        g_ref = cfg.loss_refine * np.where(mask, np.sign(a["value_ref"] - cache.gt), 0.0) / n
        g_raw = g_ref * a["gate_ref"]
        g_value_c = g_raw.copy()
        g_offset = g_raw

        g_su = g_offset * a["drift"]
        g_drift = g_offset * a["su"]
        g_s = CANDIDATE_STEPS[:, None, None] * g_drift[None]

        s = a["s"]
        g_z = s * (g_s - (g_s * s).sum(axis=0, keepdims=True))
        g_z *= a["cvalid"]

        kcol = params.comp_k.sum(axis=0)
        wt = a["wt"]
        g_kcol = np.tensordot(wt, g_z, axes=((1, 2, 3), (0, 1, 2)))
        g.comp_k += g_kcol[None, :]
        g.comp_b += g_z.sum()

        g_wt = kcol[:, None, None, None] * g_z[None]
        fp = a["fp"]
        fu = a["fu"]
        g_fp = g_wt * (-2.0 * fp * fu)
        g_fu = g_wt * (-(fp * fp))

        sig_fu = K.sigmoid(a["fu_arg"])
        g_fu_arg = g_fu * sig_fu
        g.fu_beta += g_fu_arg.sum(axis=(2, 3))
        g.fu_vs += float((g_fu_arg.sum(axis=(0, 1)) * a["su"]).sum())
        g_su += params.fu_vs * g_fu_arg.sum(axis=(0, 1))
        g_earg = g_fu_arg.sum(axis=1)                       # (M, H, W)
        g.fu_v += np.tensordot(g_earg, a["e_pool"], axes=((1, 2), (1, 2)))
        g_e = np.tensordot(params.fu_v, g_earg, axes=(0, 0))  # (Cf, H, W)

        # unfold adjoint
        co = a["f_s"].shape[0]
        g_f_s = g_fp[co:2 * co].copy()
        for k in range(5):
            g_f_s[:, a["prev_idx"][k]] += g_fp[:co, k]
            g_f_s[:, a["next_idx"][k]] += g_fp[2 * co:, k]

        g_sampled = -np.moveaxis(g_f_s, 1, 0)               # (5, Cf, H, W)
        g_sampled = g_sampled * cache.valid_px[None, None]
        g_cols = K.sample_cols_vjp(cache.g_r, a["cand_cols"], np.ascontiguousarray(g_sampled))

        if cfg.candidate_mode == "pixel":
            g_warp_col = g_cols.sum(axis=0)
        else:
            v_k = a["v_k"]
            if cfg.space == "depth":
                g_v = g_cols * (self.rig.fb / (v_k * v_k))
            else:
                g_v = -g_cols
            g_pre = g_v * a["gate_k"]
            g_value_c += g_pre.sum(axis=0)
            g_su += np.tensordot(CANDIDATE_STEPS, g_pre, axes=(0, 0))
            g_warp_col = np.zeros_like(g_value_c)

        # scale head
        sig_su = K.sigmoid(a["su_arg"])
        g_su_arg = g_su * sig_su
        g.su_we += np.tensordot(g_su_arg, a["e_pool"], axes=((0, 1), (1, 2)))
        g.su_wd += float((g_su_arg * a["value_c"]).sum())
        g.su_b += float(g_su_arg.sum())
        g_value_c += params.su_wd * g_su_arg
        g_e += params.su_we[:, None, None] * g_su_arg[None]

        # pooled error -> f_u -> warp
        g_absfu = K.box_mean_adjoint(g_e, cfg.pool_radius)
        g_f_u = g_absfu * np.sign(a["f_u"])
        g_w0 = -g_f_u * a["wvalid"][None]
        g_warp_col += K.sample_cols_vjp(
            cache.g_r, a["warp_col"][None], np.ascontiguousarray(g_w0[None])
        )[0]

        gate_c = a["value_c"] > self.floor
        if cfg.space == "depth":
            g_value_c += g_warp_col * (self.rig.fb / (a["safe_c"] ** 2)) * gate_c
        else:
            g_value_c += -g_warp_col * gate_c

        # coarse loss and soft-argmax
        g_value_c += cfg.loss_coarse * np.where(
            mask, np.sign(a["value_c"] - cache.gt), 0.0) / n
        g_ibar = g_value_c * self.step
        g_ql = K.coarse_expect_bwd(a["ql"], np.ascontiguousarray(g_ibar), 4)
        g_ql *= cache.valid_q
        g_eff = -np.tensordot(cache.apair, g_ql, axes=((0, 2, 3), (0, 1, 2)))
        g.agg_w[:c] += g_eff
        g.agg_w[c:] += g_eff
        g.agg_b += float(g_ql.sum())

        return loss, g

    # -- inference ----------------------------------------------------------

    def infer_maps(self, left: np.ndarray, right: np.ndarray, params: Params) -> dict:
        """Full-resolution coarse/refined maps for a stereo pair (no supervision)."""
        cache = self.precompute_images(left, right)
        _, a = self.forward(cache, params, want_aux=True)
        out = dict(
            value_coarse=a["value_c"], value_refined=a["value_ref"],
            su=a["su"], offset=a["offset"], scores=a["s"], valid=cache.valid_px,
        )
        if self.cfg.space == "depth":
            out["depth_coarse"] = a["value_c"]
            out["depth_refined"] = a["value_ref"]
        else:
            safe_c = np.maximum(a["value_c"], 1e-6)
            safe_r = np.maximum(a["value_ref"], 1e-6)
            out["depth_coarse"] = self.rig.fb / safe_c
            out["depth_refined"] = self.rig.fb / safe_r
            out["valid"] = out["valid"] & (a["value_ref"] > 0)
        return out


def depth_map_from(values: np.ndarray, valid: np.ndarray) -> DepthMap:
    return DepthMap(depth=np.asarray(values, dtype=np.float64), valid=valid)
