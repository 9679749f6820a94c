"""Command-line entry point: gen / train / infer / eval / ablate / analyze-error."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import backend_name
from .ablation import run_ablation
from .config import RunConfig
from .costvolume import DepthMap
from .dataset import generate_dataset, load_dataset
from .errors import ConfigError, DataError, NumericalError
from .fileio import (
    load_checkpoint,
    load_pnm,
    save_checkpoint,
    save_pfm,
    save_pnm,
    save_volume,
)
from .geometry import depth_error_from_disparity_error
from .learning import evaluate_loss, history_csv, train
from .metrics import EvalReport, emit_error_map, pooled_stats, write_reports_csv
from .pipeline import Params, Pipeline

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(p):
    p.add_argument("--config", default=None, help="INI config file")
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                   help="override a config value")
    p.add_argument("--threads", type=int, default=None, help="worker thread cap")
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="force fixed-order reductions (default on)")
    p.add_argument("--seed", type=int, default=None, help="override train.seed")


def _runconfig(args) -> RunConfig:
    cfg = RunConfig(args.config, args.set)
    if args.seed is not None:
        cfg.cp.set("train", "seed", str(args.seed))
    if args.threads is not None:
        cfg.cp.set("run", "threads", str(args.threads))
    return cfg


def _build_pipeline(cfg: RunConfig, space: str = "depth") -> Pipeline:
    return Pipeline(cfg.rig(), cfg.planes(), cfg.pipeline(space))


def _init_params(pipe: Pipeline, cfg: RunConfig) -> Params:
    ini = cfg.param_inits()
    c = pipe.cfg.extractor.channel_count
    su0 = ini["su0"] if pipe.cfg.space == "depth" else 1.0
    return Params.init(c, c, su0=su0, fu0=ini["fu0"],
                       agg_w0=ini["agg_w0"], comp_k0=ini["comp_k0"])


def _load_params(pipe: Pipeline, cfg: RunConfig, path) -> Params:
    c = pipe.cfg.extractor.channel_count
    return Params.from_groups(load_checkpoint(path), c, c)


# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _runconfig(args)
    opts = cfg.gen_options()
    seed = cfg.train().seed
    names = generate_dataset(
        args.out, args.count, cfg.rig(), seed=seed, threads=cfg.threads(), **opts
    )
    print(f"wrote {len(names)} samples to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _runconfig(args)
    space = "disparity" if args.variant == "baseline" else "depth"
    pipe = _build_pipeline(cfg, space)
    samples = load_dataset(args.dataset)
    caches = [pipe.precompute(s) for s in samples]
    params = _init_params(pipe, cfg)
    phases = tuple(int(p) for p in args.phases.split(","))
    tc = cfg.train()
    initial = evaluate_loss(pipe, caches, params)
    trained, history = train(
        pipe, caches, tc, params, phases=phases,
        log=(lambda r: print(f"epoch {r.epoch} phase {r.phase} lr {r.lr:.3e} "
                             f"loss {r.loss:.4f}")) if args.verbose else None,
    )
    final = evaluate_loss(pipe, caches, trained)
    save_checkpoint(trained.to_groups(), args.out)
    if args.history:
        history_csv(history, args.history)
    print(f"initial loss {initial:.4f} -> final loss {final:.4f} "
          f"({100 * (1 - final / initial):.1f}% reduction); checkpoint: {args.out}")
    return EXIT_OK


def _pad_to_multiple4(img: np.ndarray):
    h, w = img.shape[:2]
    ph = (-h) % 4
    pw = (-w) % 4
    if ph == 0 and pw == 0:
        return img, (h, w)
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (img.ndim - 2)
    return np.pad(img, pad, mode="edge"), (h, w)


def cmd_infer(args) -> int:
    cfg = _runconfig(args)
    pipe = _build_pipeline(cfg, "depth")
    left = load_pnm(args.left)
    right = load_pnm(args.right)
    if left.shape != right.shape:
        raise ConfigError(f"image size mismatch: {left.shape} vs {right.shape}")
    left, (h, w) = _pad_to_multiple4(left)
    right, _ = _pad_to_multiple4(right)
    params = _load_params(pipe, cfg, args.checkpoint) if args.checkpoint \
        else _init_params(pipe, cfg)
    maps = pipe.infer_maps(left, right, params)
    depth = maps["depth_refined"][:h, :w]
    save_pfm(depth.astype(np.float32), args.out)
    if args.dump_intermediates:
        d = Path(args.dump_intermediates)
        d.mkdir(parents=True, exist_ok=True)
        save_pfm(maps["depth_coarse"][:h, :w].astype(np.float32), d / "coarse.pfm")
        save_pfm(maps["su"][:h, :w].astype(np.float32), d / "su.pfm")
        save_pfm(maps["offset"][:h, :w].astype(np.float32), d / "offset.pfm")
        su = maps["su"][:h, :w]
        save_pnm(su / max(su.max(), 1e-9), d / "su.pgm")
        off = maps["offset"][:h, :w]
        save_pnm(np.abs(off) / max(np.abs(off).max(), 1e-9), d / "offset.pgm")
        save_volume(maps["scores"][:, :h, :w], d / "scores.ddlv")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _runconfig(args)
    pipe = _build_pipeline(cfg, "depth")
    planes = cfg.planes()
    samples = load_dataset(args.dataset)
    bins = cfg.bins()
    preds = []
    if args.pred:
        from .fileio import load_manifest, load_pfm

        names = load_manifest(Path(args.dataset) / "manifest.txt")
        missing = [n for n in names if not (Path(args.pred) / f"{n}.pfm").exists()]
        if missing:
            for n in missing:
                print(f"missing prediction: {n}.pfm", file=sys.stderr)
            raise DataError(f"{len(missing)} predictions missing from {args.pred}")
        for n in names:
            depth = load_pfm(Path(args.pred) / f"{n}.pfm").astype(np.float64)
            preds.append((depth, depth > 0))
    else:
        params = _load_params(pipe, cfg, args.checkpoint) if args.checkpoint \
            else _init_params(pipe, cfg)
        for s in samples:
            maps = pipe.infer_maps(s.left, s.right, params)
            preds.append((maps["depth_refined"], maps["valid"]))
    pairs = []
    gts = []
    for (depth, valid), s in zip(preds, samples):
        gt = s.depth_gt.depth
        mask = (s.depth_gt.valid & ~s.occluded & valid
                & (gt >= planes.d_min) & (gt < planes.d_max))
        pairs.append((np.abs(depth - gt), mask))
        gts.append(gt)
    overall, count, bin_stats = pooled_stats(pairs, gts, bins)
    report = EvalReport(variant=args.variant_name, overall_mae=overall,
                        overall_count=count, bins=bin_stats)
    write_reports_csv([report], args.report)
    if args.error_maps:
        d = Path(args.error_maps)
        d.mkdir(parents=True, exist_ok=True)
        for i, ((depth, valid), s) in enumerate(zip(preds, samples)):
            pred_map = DepthMap(depth=depth, valid=valid)
            mask = pairs[i][1]
            emit_error_map(pred_map, s.depth_gt, mask, d / f"sample_{i:04d}.pgm",
                           e_max=cfg.emax())
    print(f"overall MAE {overall:.4f} m over {count} px; report: {args.report}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _runconfig(args)
    rig = cfg.rig()
    planes = cfg.planes()
    base = cfg.pipeline("depth")
    tc = cfg.train()
    if args.train_dataset and args.test_dataset:
        train_samples = load_dataset(args.train_dataset)
        test_samples = load_dataset(args.test_dataset)
    else:
        from .dataset import dataset_samples_for_training

        opts = cfg.gen_options()
        train_samples = dataset_samples_for_training(
            rig, seed=tc.seed, count=args.train_count, **opts)
        test_samples = dataset_samples_for_training(
            rig, seed=tc.seed + 500_000, count=args.test_count, **opts)
    results = run_ablation(
        rig, planes, base, train_samples, test_samples, tc, bins=cfg.bins(),
        log=print if args.verbose else None,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reports_csv([r.report for r in results.values()], out / "ablation.csv")
    for name, res in results.items():
        save_checkpoint(res.params.to_groups(), out / f"{name}.ckpt")
        history_csv(res.history, out / f"{name}_history.csv")
        row = "  ".join(f"[{b.lo:g},{b.hi:g}):{b.mae:.3f}" for b in res.report.bins)
        print(f"{name:10s} MAE {res.report.overall_mae:.4f} m  {row}")
    return EXIT_OK


def cmd_analyze_error(args) -> int:
    cfg = _runconfig(args)
    rig = cfg.rig()
    errors = [0.25, 0.5, 1.0]
    depths = np.arange(1.0, 81.0)
    fit_depths = np.array([5.0, 10.0, 20.0, 40.0, 80.0])
    rows = []
    for e in errors:
        slope = float(np.polyfit(
            np.log(fit_depths),
            np.log([depth_error_from_disparity_error(rig, d, e) for d in fit_depths]),
            1,
        )[0])
        for d in depths:
            rows.append((e, d, depth_error_from_disparity_error(rig, float(d), e), slope))
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("dis_error_px,depth_m,depth_error_m,loglog_slope\n")
        for e, d, err, slope in rows:
            f.write(f"{e:g},{d:g},{err:.9g},{slope:.6f}\n")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    p = _Parser(prog="depthsweep",
                description="Direct-depth stereo: plane sweep + adaptive refinement")
    p.add_argument("--version", action="version",
                   version=f"depthsweep {__version__} ({backend_name()} kernels)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render a synthetic dataset")
    _add_common(g)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train on a dataset")
    _add_common(t)
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--history", default=None, help="loss history CSV")
    t.add_argument("--phases", default="1,2,3")
    t.add_argument("--variant", default="full", choices=["full", "baseline"])
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="predict depth for one stereo pair")
    _add_common(i)
    i.add_argument("--checkpoint", default=None)
    i.add_argument("--left", required=True)
    i.add_argument("--right", required=True)
    i.add_argument("--out", required=True, help="output depth PFM")
    i.add_argument("--dump-intermediates", default=None, metavar="DIR")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="evaluate predictions against a dataset")
    _add_common(e)
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--pred", default=None, help="directory of <sample>.pfm predictions")
    e.add_argument("--report", required=True, help="output CSV")
    e.add_argument("--error-maps", default=None, metavar="DIR")
    e.add_argument("--variant-name", default="model")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train + evaluate the three variants")
    _add_common(a)
    a.add_argument("--out", required=True)
    a.add_argument("--train-dataset", default=None)
    a.add_argument("--test-dataset", default=None)
    a.add_argument("--train-count", type=int, default=20)
    a.add_argument("--test-count", type=int, default=10)
    a.add_argument("--verbose", action="store_true")
    a.set_defaults(func=cmd_ablate)

    z = sub.add_parser("analyze-error", help="tabulate triangulation error growth")
    _add_common(z)
    z.add_argument("--out", required=True)
    z.set_defaults(func=cmd_analyze_error)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
