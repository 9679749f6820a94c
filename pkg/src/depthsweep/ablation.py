"""Ablation runner: the three cost-volume/supervision variants under one budget.

Variants:
  baseline   - disparity-uniform candidate sampling, disparity supervision,
               pixel-scale refinement with constant heads; depth derived
               afterward by triangulation.
  bl_dep     - depth-uniform sampling and depth supervision; refinement with
               the constant heads (scale 5 m, feature weights 1).
  bl_dep_gu  - the full pipeline with the learned scale/feature heads
               (three-phase schedule).

All variants train for the same total number of epochs from the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import DepthPlanes, StereoRig
from .learning import TrainConfig, train
from .metrics import DepthBins, EvalReport, pooled_stats
from .pipeline import Pipeline, PipelineConfig

VARIANTS = ("baseline", "bl_dep", "bl_dep_gu")


@dataclass
class VariantResult:
    report: EvalReport
    per_scene: list            # (coarse_mae, refined_mae) per test scene
    history: list
    params: object


def make_variant_pipeline(variant: str, rig: StereoRig, planes: DepthPlanes,
                          base_cfg: PipelineConfig) -> Pipeline:
    if variant == "baseline":
        cfg = replace(base_cfg, space="disparity")
    elif variant in ("bl_dep", "bl_dep_gu"):
        cfg = replace(base_cfg, space="depth")
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return Pipeline(rig, planes, cfg)


def variant_schedule(variant: str, cfg: TrainConfig) -> tuple:
    """(phases, TrainConfig) with the total epoch budget shared across variants."""
    total = sum(cfg.epochs)
    if variant == "bl_dep_gu":
        return (1, 2, 3), cfg
    return (1,), replace(cfg, epochs=(total, 0, 0))


def evaluate_variant(pipe: Pipeline, params, test_samples, planes: DepthPlanes,
                     bins: DepthBins):
    pairs = []
    gts = []
    per_scene = []
    for sample in test_samples:
        maps = pipe.infer_maps(sample.left, sample.right, params)
        gt = sample.depth_gt.depth
        mask = (
            sample.depth_gt.valid & ~sample.occluded & maps["valid"]
            & (gt >= planes.d_min) & (gt < planes.d_max)
        )
        err_ref = np.abs(maps["depth_refined"] - gt)
        err_coarse = np.abs(maps["depth_coarse"] - gt)
        n = int(mask.sum())
        if n == 0:
            raise ValueError("test scene with no valid pixels")
        per_scene.append((float(err_coarse[mask].mean()), float(err_ref[mask].mean())))
        pairs.append((err_ref, mask))
        gts.append(gt)
    overall, count, bin_stats = pooled_stats(pairs, gts, bins)
    return overall, count, bin_stats, per_scene


def run_ablation(rig: StereoRig, planes: DepthPlanes, base_cfg: PipelineConfig,
                 train_samples, test_samples, train_cfg: TrainConfig,
                 bins: DepthBins | None = None, variants=VARIANTS, log=None) -> dict:
    bins = bins or DepthBins()
    results = {}
    for variant in variants:
        pipe = make_variant_pipeline(variant, rig, planes, base_cfg)
        phases, cfg = variant_schedule(variant, train_cfg)
        caches = [pipe.precompute(s) for s in train_samples]
        params0 = pipe.default_params()
        if log is not None:
            log(f"[{variant}] training: phases={phases} epochs={cfg.epochs}")
        params, history = train(pipe, caches, cfg, params0, phases=phases,
                                log=(lambda r: log(f"[{variant}] {r}")) if log else None)
        overall, count, bin_stats, per_scene = evaluate_variant(
            pipe, params, test_samples, planes, bins
        )
        results[variant] = VariantResult(
            report=EvalReport(
                variant=variant, overall_mae=overall, overall_count=count,
                bins=bin_stats, meta={"phases": phases, "epochs": cfg.epochs},
            ),
            per_scene=per_scene, history=history, params=params,
        )
        if log is not None:
            log(f"[{variant}] overall MAE {overall:.4f} m over {count} px")
    return results
