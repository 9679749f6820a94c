"""Depth accuracy metrics: overall MAE, per-bin MAE, and error-map emission."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costvolume import DepthMap
from .fileio import save_pgm_raw

DEFAULT_BIN_EDGES = (1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0)


@dataclass(frozen=True)
class DepthBins:
    """Ordered half-open intervals [lo, hi) in meters."""

    edges: tuple = DEFAULT_BIN_EDGES

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.float64)
        if len(e) < 2 or not np.all(np.diff(e) > 0):
            raise ValueError("bin edges must be strictly increasing, at least two")

    @property
    def intervals(self):
        return [(self.edges[i], self.edges[i + 1]) for i in range(len(self.edges) - 1)]


@dataclass
class BinStat:
    lo: float
    hi: float
    mae: float
    count: int


@dataclass
class EvalReport:
    variant: str
    overall_mae: float
    overall_count: int
    bins: list
    meta: dict = field(default_factory=dict)


def mae(pred: DepthMap, gt: DepthMap, mask: np.ndarray) -> float:
    if pred.depth.shape != gt.depth.shape or mask.shape != gt.depth.shape:
        raise ValueError("pred/gt/mask shapes must agree")
    n = int(mask.sum())
    if n == 0:
        raise ValueError("empty mask")
    return float(np.abs(gt.depth - pred.depth)[mask].sum() / n)


def pmae(pred: DepthMap, gt: DepthMap, mask: np.ndarray, bins: DepthBins):
    """Per-bin MAE keyed on gt depth; empty bins are absent from the result."""
    err = np.abs(gt.depth - pred.depth)
    out = []
    for lo, hi in bins.intervals:
        sel = mask & (gt.depth >= lo) & (gt.depth < hi)
        n = int(sel.sum())
        if n == 0:
            continue
        out.append(BinStat(lo=lo, hi=hi, mae=float(err[sel].sum() / n), count=n))
    return out


def emit_error_map(pred: DepthMap, gt: DepthMap, mask: np.ndarray, path,
                   e_max: float = 5.0) -> None:
    """8-bit PGM: |gt - pred| clamped to [0, e_max], darker = lower error.

    Invalid (unmasked) pixels are white.  Quantization rounds half up.
    """
    err = np.clip(np.abs(gt.depth - pred.depth), 0.0, e_max)
    vals = np.floor(err / e_max * 255.0 + 0.5).astype(np.uint8)
    vals[~mask] = 255
    save_pgm_raw(vals, path)


def pooled_stats(errors_and_masks, gts, bins: DepthBins):
    """Aggregate (pred, gt, mask) triples from several scenes into one report body.

    errors_and_masks: list of (abs_error_map, mask); gts: matching gt depth maps.
    Returns (overall_mae, overall_count, [BinStat]).
    """
    total = 0.0
    count = 0
    bin_tot = {iv: [0.0, 0] for iv in bins.intervals}
    for (err, mask), gt in zip(errors_and_masks, gts):
        total += float(err[mask].sum())
        count += int(mask.sum())
        for lo, hi in bins.intervals:
            sel = mask & (gt >= lo) & (gt < hi)
            n = int(sel.sum())
            if n:
                acc = bin_tot[(lo, hi)]
                acc[0] += float(err[sel].sum())
                acc[1] += n
    stats = [
        BinStat(lo=lo, hi=hi, mae=acc[0] / acc[1], count=acc[1])
        for (lo, hi), acc in bin_tot.items() if acc[1] > 0
    ]
    if count == 0:
        raise ValueError("no valid pixels across the evaluation set")
    return total / count, count, stats


def report_csv_rows(report: EvalReport):
    rows = [("variant", "bin_lo", "bin_hi", "mae_m", "count")]
    for b in report.bins:
        rows.append((report.variant, f"{b.lo:g}", f"{b.hi:g}", f"{b.mae:.6f}", str(b.count)))
    rows.append((report.variant, "overall", "", f"{report.overall_mae:.6f}",
                 str(report.overall_count)))
    return rows


def write_reports_csv(reports, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        header_done = False
        for rep in reports:
            rows = report_csv_rows(rep)
            if not header_done:
                f.write(",".join(rows[0]) + "\n")
                header_done = True
            for row in rows[1:]:
                f.write(",".join(row) + "\n")
