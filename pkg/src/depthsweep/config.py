"""Run configuration: INI-style file, `section.key=value` overrides, builders."""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .errors import ConfigError
from .features import ExtractorConfig
from .geometry import RIG_PRESETS, DepthPlanes, StereoRig, sample_depth_planes
from .learning import TrainConfig
from .metrics import DepthBins
from .pipeline import PipelineConfig

DEFAULTS = """
[rig]
preset = sceneflow
width = 256
height = 128

[planes]
d_min = 1.0
d_max = 81.0
count = 80

[features]
gray = true
sobel = true
blur_radii = 1,2,4
std_radius = 2
census = true

[aggregation]
radius = 2
init_weight = 1.0

[refinement]
pool_radius = 2
su_init = 5.0
fu_init = 1.0
comp_init = 2.0
depth_floor = 0.1
candidate_mode = value

[loss]
coarse = 1.0
refine = 1.0
mask_occluded = true

[train]
lr = 1.0
momentum = 0.8
t_max = 5
eta_min = 4e-8
epochs = 6,3,6
batch = 4
crop = 256,512
seed = 0

[eval]
bin_edges = 1,10,20,30,40,50,60,70,80
emax = 5.0

[gen]
n_primitives = 8
slant_prob = 0.0
noise_sigma = 0.0

[run]
threads = 1
deterministic = true
"""


class RunConfig:
    """Typed view over a configparser with defaults and CLI overrides."""

    def __init__(self, path=None, overrides=()):
        self.cp = configparser.ConfigParser()
        self.cp.read_string(DEFAULTS)
        if path is not None:
            read = self.cp.read(str(path))
            if not read:
                raise ConfigError(f"config file not found: {path}")
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override must look like section.key=value: {item!r}")
            key, value = item.split("=", 1)
            section, name = key.split(".", 1)
            if not self.cp.has_section(section):
                raise ConfigError(f"unknown config section {section!r}")
            self.cp.set(section.strip(), name.strip(), value.strip())

    # typed getters -------------------------------------------------------

    def _float(self, s, k):
        try:
            return self.cp.getfloat(s, k)
        except ValueError as exc:
            raise ConfigError(f"bad float for {s}.{k}") from exc

    def _int(self, s, k):
        try:
            return self.cp.getint(s, k)
        except ValueError as exc:
            raise ConfigError(f"bad int for {s}.{k}") from exc

    def _bool(self, s, k):
        try:
            return self.cp.getboolean(s, k)
        except ValueError as exc:
            raise ConfigError(f"bad bool for {s}.{k}") from exc

    def _tuple(self, s, k, cast=float):
        raw = self.cp.get(s, k)
        try:
            return tuple(cast(v) for v in raw.split(",") if v.strip())
        except ValueError as exc:
            raise ConfigError(f"bad list for {s}.{k}: {raw!r}") from exc

    # builders --------------------------------------------------------------

    def rig(self) -> StereoRig:
        w = self._int("rig", "width")
        h = self._int("rig", "height")
        if self.cp.has_option("rig", "baseline_m") and self.cp.has_option("rig", "focal_px"):
            return StereoRig(
                baseline_m=self._float("rig", "baseline_m"),
                focal_px=self._float("rig", "focal_px"),
                width_px=w, height_px=h,
            )
        preset = self.cp.get("rig", "preset")
        if preset not in RIG_PRESETS:
            raise ConfigError(f"unknown rig preset {preset!r}")
        b, f = RIG_PRESETS[preset]
        return StereoRig(baseline_m=b, focal_px=f, width_px=w, height_px=h)

    def planes(self) -> DepthPlanes:
        try:
            return sample_depth_planes(
                self._float("planes", "d_min"),
                self._float("planes", "d_max"),
                self._int("planes", "count"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def extractor(self) -> ExtractorConfig:
        return ExtractorConfig(
            gray=self._bool("features", "gray"),
            sobel=self._bool("features", "sobel"),
            blur_radii=self._tuple("features", "blur_radii", int),
            std_radius=self._int("features", "std_radius"),
            census=self._bool("features", "census"),
        )

    def pipeline(self, space: str = "depth") -> PipelineConfig:
        return PipelineConfig(
            space=space,
            candidate_mode=self.cp.get("refinement", "candidate_mode"),
            agg_radius=self._int("aggregation", "radius"),
            pool_radius=self._int("refinement", "pool_radius"),
            value_floor=self._float("refinement", "depth_floor"),
            loss_coarse=self._float("loss", "coarse"),
            loss_refine=self._float("loss", "refine"),
            extractor=self.extractor(),
            mask_occluded=self._bool("loss", "mask_occluded"),
        )

    def train(self) -> TrainConfig:
        epochs = self._tuple("train", "epochs", int)
        if len(epochs) != 3:
            raise ConfigError("train.epochs must list three phase lengths")
        try:
            return TrainConfig(
                lr=self._float("train", "lr"),
                momentum=self._float("train", "momentum"),
                t_max=self._int("train", "t_max"),
                eta_min=self._float("train", "eta_min"),
                epochs=epochs,
                batch_size=self._int("train", "batch"),
                crop=self._tuple("train", "crop", int),
                seed=self._int("train", "seed"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def bins(self) -> DepthBins:
        return DepthBins(edges=self._tuple("eval", "bin_edges"))

    def param_inits(self) -> dict:
        return dict(
            su0=self._float("refinement", "su_init"),
            fu0=self._float("refinement", "fu_init"),
            agg_w0=self._float("aggregation", "init_weight"),
            comp_k0=self._float("refinement", "comp_init"),
        )

    def gen_options(self) -> dict:
        return dict(
            n_primitives=self._int("gen", "n_primitives"),
            slant_prob=self._float("gen", "slant_prob"),
            noise_sigma=self._float("gen", "noise_sigma"),
        )

    def threads(self) -> int:
        import os

        env = os.environ.get("DDL_THREADS")
        if env is not None:
            try:
                return max(1, int(env))
            except ValueError as exc:
                raise ConfigError(f"bad DDL_THREADS value {env!r}") from exc
        return max(1, self._int("run", "threads"))

    def emax(self) -> float:
        return self._float("eval", "emax")
