"""On-disk datasets: PGM stereo pairs + PFM depth + PGM occlusion + manifest."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .costvolume import DepthMap
from .errors import DataError
from .fileio import load_manifest, load_pfm, load_pnm, save_manifest, save_pfm, save_pnm
from .geometry import StereoRig
from .scenes import Sample, generate_scene, random_scene_spec

SAMPLE_FILES = ("left.pgm", "right.pgm", "depth.pfm", "occlusion.pgm")


def save_sample(sample: Sample, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_pnm(sample.left, d / "left.pgm")
    save_pnm(sample.right, d / "right.pgm")
    depth = np.where(sample.depth_gt.valid, sample.depth_gt.depth, 0.0)
    save_pfm(depth.astype(np.float32), d / "depth.pfm")
    save_pnm(sample.occluded.astype(np.float32), d / "occlusion.pgm")


def load_sample(directory) -> Sample:
    d = Path(directory)
    for name in SAMPLE_FILES:
        if not (d / name).exists():
            raise DataError(f"missing {name} in sample directory {d}")
    left = load_pnm(d / "left.pgm")
    right = load_pnm(d / "right.pgm")
    depth = load_pfm(d / "depth.pfm").astype(np.float64)
    occluded = load_pnm(d / "occlusion.pgm") > 0.5
    gt = DepthMap(depth=depth, valid=depth > 0)
    return Sample(left=left, right=right, depth_gt=gt, occluded=occluded)


def generate_dataset(out_dir, count: int, rig: StereoRig, seed: int,
                     n_primitives: int = 8, slant_prob: float = 0.0,
                     noise_sigma: float = 0.0, threads: int = 1) -> list:
    """Render `count` scenes deterministically from `seed`; returns sample names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"sample_{i:04d}" for i in range(count)]

    def render(i: int) -> None:
        spec = random_scene_spec(
            rig, seed=seed + 1000 * i, n_primitives=n_primitives,
            slant_prob=slant_prob, noise_sigma=noise_sigma,
        )
        save_sample(generate_scene(spec, seed=seed + i), out / names[i])

    if threads > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(render, range(count)))
    else:
        for i in range(count):
            render(i)
    save_manifest(names, out / "manifest.txt")
    return names


def load_dataset(directory) -> list:
    d = Path(directory)
    manifest = d / "manifest.txt"
    if not manifest.exists():
        raise DataError(f"missing manifest.txt in {d}")
    samples = []
    missing = []
    for name in load_manifest(manifest):
        try:
            samples.append(load_sample(d / name))
        except DataError as exc:
            missing.append(f"{name}: {exc}")
    if missing:
        raise DataError("dataset has broken samples:\n" + "\n".join(missing))
    return samples


def dataset_samples_for_training(rig: StereoRig, seed: int, count: int,
                                 n_primitives: int = 8, slant_prob: float = 0.0,
                                 noise_sigma: float = 0.0) -> list:
    """In-memory dataset (no disk roundtrip), same scene distribution as gen."""
    out = []
    for i in range(count):
        spec = random_scene_spec(
            rig, seed=seed + 1000 * i, n_primitives=n_primitives,
            slant_prob=slant_prob, noise_sigma=noise_sigma,
        )
        out.append(generate_scene(spec, seed=seed + i))
    return out
