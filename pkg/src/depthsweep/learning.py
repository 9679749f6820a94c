"""Supervision, gradients, and the three-phase training schedule.

Training follows the staged protocol: phase 1 optimizes the matching backbone
(aggregation + compression) with both uncertainty heads frozen at their
constant initialization (scale 5 m, feature weights 1), phase 2 unfreezes the
scale head, phase 3 trains everything.  Updates are momentum SGD with a
cosine-annealed learning rate.  Analytic gradients from the pipeline are the
fast path; central finite differences over the parameter vector provide the
independent oracle (and a slow fallback).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costvolume import DepthMap
from .errors import NumericalError
from .pipeline import GROUP_NAMES, Params, Pipeline, SampleCache

PHASE_FROZEN = {1: ("su_head", "fu_head"), 2: ("fu_head",), 3: ()}


def l1_depth_loss(pred: DepthMap, gt: DepthMap, mask: np.ndarray) -> float:
    """Mean absolute difference in meters over the masked pixels."""
    if pred.depth.shape != gt.depth.shape or mask.shape != gt.depth.shape:
        raise ValueError("pred/gt/mask shapes must agree")
    n = int(mask.sum())
    if n == 0:
        raise ValueError("empty mask: no valid pixels to supervise")
    return float(np.abs(pred.depth - gt.depth)[mask].sum() / n)


def fd_gradient(loss_fn, params: Params, groups=GROUP_NAMES, rel_step: float = 1e-4) -> np.ndarray:
    """Central finite differences over the listed groups' flattened vector.

    Step per component: rel_step * max(|p|, 1).
    """
    x0 = params.to_vector(groups)
    grad = np.zeros_like(x0)
    for j in range(len(x0)):
        h = rel_step * max(abs(x0[j]), 1.0)
        xp = x0.copy()
        xp[j] += h
        fp = loss_fn(params.with_vector(xp, groups))
        xm = x0.copy()
        xm[j] -= h
        fm = loss_fn(params.with_vector(xm, groups))
        grad[j] = (fp - fm) / (2.0 * h)
    return grad


def grad_params(loss_fn, params: Params, groups=GROUP_NAMES,
                frozen=(), rel_step: float = 1e-4) -> dict:
    """Per-group gradient dict by finite differences; frozen groups get zeros."""
    l0 = loss_fn(params)
    if not np.isfinite(l0):
        raise NumericalError(f"loss is not finite at the current parameters: {l0}")
    out = {}
    for g in groups:
        if g in frozen:
            out[g] = np.zeros(len(params.group_vector(g)))
        else:
            out[g] = fd_gradient(loss_fn, params, groups=(g,), rel_step=rel_step)
    return out


def cosine_lr(lr0: float, eta_min: float, t: int, t_max: int) -> float:
    """eta_min + (lr0 - eta_min) * (1 + cos(pi t / t_max)) / 2."""
    return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + np.cos(np.pi * t / t_max))


@dataclass
class TrainConfig:
    lr: float = 1.0
    momentum: float = 0.8
    t_max: int = 5
    eta_min: float = 4e-8
    epochs: tuple = (6, 3, 6)
    batch_size: int = 4
    crop: tuple = (256, 512)
    seed: int = 0

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must be in [0, 1)")


# preset matching the published schedule (SceneFlow-scale)
PAPER_TRAIN = TrainConfig(lr=0.001, momentum=0.8, t_max=5, eta_min=4e-8,
                          epochs=(12, 8, 24), batch_size=8)


@dataclass
class EpochRecord:
    epoch: int
    phase: int
    lr: float
    loss: float


def evaluate_loss(pipeline: Pipeline, caches, params: Params) -> float:
    """Dataset-mean training loss at fixed parameters."""
    return float(np.mean([pipeline.forward(c, params)[0] for c in caches]))


def _batch_grad(pipeline: Pipeline, caches, params: Params):
    loss_sum = 0.0
    vec = None
    for c in caches:
        loss, g = pipeline.loss_and_grad(c, params)
        loss_sum += loss
        gv = g.to_vector()
        vec = gv if vec is None else vec + gv
    n = len(caches)
    return loss_sum / n, vec / n


def train(pipeline: Pipeline, caches, cfg: TrainConfig, params: Params,
          phases=(1, 2, 3), log=None):
    """Run the phased schedule; returns (trained params, [EpochRecord])."""
    if not caches:
        raise ValueError("empty training set")
    params = params.copy()
    history = []
    group_slices = {}
    i = 0
    for g in GROUP_NAMES:
        n = len(params.group_vector(g))
        group_slices[g] = slice(i, i + n)
        i += n

    global_epoch = 0
    for phase in phases:
        frozen = PHASE_FROZEN[phase]
        active = np.zeros(i, dtype=bool)
        for g in GROUP_NAMES:
            if g not in frozen:
                active[group_slices[g]] = True
        velocity = np.zeros(i)
        n_epochs = cfg.epochs[phase - 1]
        for ep in range(n_epochs):
            lr = cosine_lr(cfg.lr, cfg.eta_min, ep, cfg.t_max)
            rng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed & 0x7FFFFFFF, phase, ep])
            )
            order = rng.permutation(len(caches))
            batch_losses = []
            for start in range(0, len(order), cfg.batch_size):
                batch = [caches[j] for j in order[start:start + cfg.batch_size]]
                loss, grad = _batch_grad(pipeline, caches=batch, params=params)
                if not np.isfinite(loss):
                    raise NumericalError(
                        f"training diverged: loss={loss} at phase {phase} epoch {ep}"
                    )
                batch_losses.append(loss)
                velocity = cfg.momentum * velocity + grad
                step = lr * velocity * active
                params = params.with_vector(params.to_vector() - step)
            rec = EpochRecord(epoch=global_epoch, phase=phase, lr=float(lr),
                              loss=float(np.mean(batch_losses)))
            history.append(rec)
            if log is not None:
                log(rec)
            global_epoch += 1
    return params, history


def history_csv(history, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch,phase,lr,loss\n")
        for r in history:
            f.write(f"{r.epoch},{r.phase},{r.lr:.12g},{r.loss:.12g}\n")


def random_crop(img: np.ndarray, crop_hw: tuple, rng: np.random.Generator):
    """Crop only when the image exceeds the crop size; offsets divisible by 4."""
    ch, cw = crop_hw
    h, w = img.shape[:2]
    if h <= ch and w <= cw:
        return img, (0, 0)
    y0 = int(rng.integers(0, max((h - ch) // 4, 0) + 1)) * 4 if h > ch else 0
    x0 = int(rng.integers(0, max((w - cw) // 4, 0) + 1)) * 4 if w > cw else 0
    return img[y0:y0 + min(ch, h), x0:x0 + min(cw, w)], (y0, x0)
