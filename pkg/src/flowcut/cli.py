"""Command-line pipeline driver.

Subcommands: ``synth`` (build a synthetic corpus), ``extract`` (per-frame
instance masks from feature files), ``curate`` (match masks across frames
into a two-frame-clip dataset), ``eval`` (score predictions against a
dataset) and ``overlay`` (render mask boundaries as PNGs).

Exit codes: 0 success, 2 configuration error, 3 input format error,
4 empty input, 1 internal error. Log level comes from the FLOWCUT_LOG
environment variable.

Worker pools parallelize per frame (extract) or per video (curate), with
results collected in submission order and BLAS pinned to one thread while
extracting, so outputs are byte-identical for any ``--workers`` value.
"""

from __future__ import annotations

import argparse
import colorsys
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image
from threadpoolctl import threadpool_limits

from . import evaluation, matching, synth, tensor_io
from .affinity import AffinityConfig
from .errors import (ConfigError, CorruptionError, EmptyInputError,
                     FlowcutError, FormatError, SchemaError)
from .maskcut import MaskCutConfig, extract_masks, upsample_mask

log = logging.getLogger("flowcut")


def _ordered_map(fn, items, workers: int) -> list:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _video_files(root: Path, pattern: str) -> list[tuple[str, list[Path]]]:
    if not root.is_dir():
        raise ConfigError(f"{root} is not a directory")
    out = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(sub.glob(pattern))
        if files:
            out.append((sub.name, files))
    return out


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------

def cmd_extract(args) -> int:
    acfg = AffinityConfig(alpha=args.alpha, tau=args.tau, epsilon=args.epsilon)
    mcfg = MaskCutConfig(max_masks=args.max_masks,
                         min_area_frac=args.min_area_frac,
                         max_area_frac=args.max_area_frac,
                         lambda2_max=args.lambda2_max)
    use_flow = acfg.alpha < 1.0
    flow_dir = Path(args.flow_features_dir) if args.flow_features_dir else None
    if use_flow and flow_dir is None:
        raise ConfigError(
            f"alpha={acfg.alpha} requires --flow-features-dir "
            f"(only alpha=1 may omit flow)")
    if use_flow and not flow_dir.is_dir():
        raise ConfigError(f"--flow-features-dir {flow_dir} is not a directory")

    tasks = [(vname, f) for vname, files in
             _video_files(Path(args.features_dir), "*.fcft") for f in files]
    if not tasks:
        raise EmptyInputError(f"no .fcft files under {args.features_dir}")
    if use_flow:
        for vname, f in tasks:
            if not (flow_dir / vname / f.name).exists():
                raise ConfigError(f"missing flow features for {vname}/{f.name}")

    def run(task):
        vname, f = task
        rgb = tensor_io.read_feature_map(f)
        flow = tensor_io.read_feature_map(flow_dir / vname / f.name) \
            if use_flow else None
        masks = extract_masks(rgb, flow, acfg, mcfg)
        h = args.frame_height or rgb.rows
        w = args.frame_width or rgb.cols
        rles = [tensor_io.rle_encode(upsample_mask(m, h, w)) for m in masks]
        return h, w, rles

    # single BLAS thread keeps eigensolves identical under any pool size
    with threadpool_limits(limits=1, user_api="blas"):
        results = _ordered_map(run, tasks, args.workers)

    out_dir = Path(args.out)
    for (vname, f), (h, w, rles) in zip(tasks, results):
        d = out_dir / vname
        d.mkdir(parents=True, exist_ok=True)
        tensor_io.write_frame_masks(rles, h, w, d / f"{f.stem}.json")
        log.info("extract: %s/%s -> %d mask(s)", vname, f.stem, len(rles))
    return 0


# ---------------------------------------------------------------------------
# curate
# ---------------------------------------------------------------------------

def _parse_gaps(text: str) -> list[int]:
    try:
        gaps = [int(g) for g in text.split(",") if g.strip()]
    except ValueError:
        raise ConfigError(f"--gaps must be comma-separated integers, got {text!r}")
    if not gaps or min(gaps) < 1:
        raise ConfigError(f"--gaps must be positive, got {text!r}")
    return gaps


def cmd_curate(args) -> int:
    gaps = _parse_gaps(args.gaps)
    if not 0.0 <= args.iou_thresh < 1.0:
        raise ConfigError(f"--iou-thresh must be in [0, 1), got {args.iou_thresh}")
    videos = _video_files(Path(args.masks_dir), "*.json")
    if not videos:
        raise EmptyInputError(f"no mask files under {args.masks_dir}")

    def load_and_curate(entry):
        vid, vname, files = entry
        dims = None
        frames = []
        names = []
        for f in files:
            h, w, masks = tensor_io.read_frame_masks(f)
            if dims is None:
                dims = (h, w)
            elif dims != (h, w):
                raise SchemaError(f"{f}: frame is {h}x{w}, video started as "
                                  f"{dims[0]}x{dims[1]}")
            frames.append([tensor_io.rle_decode(m) for m in masks])
            names.append(f"{vname}/{f.stem}.jpg")
        clips = matching.curate(frames, gaps=gaps, video_id=vid,
                                thresh=args.iou_thresh,
                                one_to_one=args.one_to_one)
        report = matching.curation_report(frames, clips, gaps)
        return vid, vname, dims, names, clips, report

    tasks = [(vid, vname, files)
             for vid, (vname, files) in enumerate(videos, start=1)]
    loaded = _ordered_map(load_and_curate, tasks, args.workers)

    all_clips = []
    meta = {}
    report_videos = {}
    for vid, vname, dims, names, clips, report in loaded:
        all_clips.extend(clips)
        meta[vid] = matching.VideoMeta(height=dims[0], width=dims[1],
                                       file_names=names)
        report_videos[vname] = report
        log.info("curate: %s -> %d clip(s)", vname, len(clips))
    ds = matching.build_dataset(all_clips, meta)
    tensor_io.write_dataset(ds, args.out)
    if args.report:
        totals = {key: sum(r[key] for r in report_videos.values())
                  for key in ("candidate_pairs", "emitted_clips", "dropped_masks")}
        Path(args.report).write_text(json.dumps(
            {"videos": report_videos, "totals": totals},
            indent=2, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    gt = tensor_io.read_dataset(args.gt)
    preds = evaluation.read_predictions(args.pred)
    report = evaluation.evaluate(gt, preds,
                                 ap_score_thresh=args.score_thresh,
                                 jf_score_thresh=args.jf_score_thresh,
                                 workers=args.workers)
    print(evaluation.format_report(report))
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_json(), indent=2,
                                             sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = synth.SynthSpec(
        seed=args.seed, n_videos=args.n_videos,
        frames_per_video=args.frames, rows=args.grid_rows,
        cols=args.grid_cols, dim=args.dim, n_objects=args.objects,
        shape=args.shape, velocity_min=args.velocity_min,
        velocity_max=args.velocity_max, noise_sigma=args.noise_sigma,
        distractor=args.distractor, flow_gap=args.flow_gap)
    result = synth.generate(spec)
    synth.write_corpus(result, args.out)
    print(f"wrote {spec.n_videos} video(s) x {spec.frames_per_video} frame(s) "
          f"to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# overlay
# ---------------------------------------------------------------------------

def _palette(n: int) -> list[tuple[int, int, int]]:
    colors = []
    for k in range(n):
        r, g, b = colorsys.hsv_to_rgb((k * 0.61803398875) % 1.0, 0.85, 1.0)
        colors.append((int(r * 255), int(g * 255), int(b * 255)))
    return colors


def cmd_overlay(args) -> int:
    videos = _video_files(Path(args.masks_dir), "*.json")
    if not videos:
        raise EmptyInputError(f"no mask files under {args.masks_dir}")
    out_dir = Path(args.out)
    for vname, files in videos:
        d = out_dir / vname
        d.mkdir(parents=True, exist_ok=True)
        for f in files:
            h, w, masks = tensor_io.read_frame_masks(f)
            canvas = np.zeros((h, w, 3), dtype=np.uint8)
            colors = _palette(len(masks))
            for k, pm in enumerate(masks):
                edge = evaluation.mask_boundary(tensor_io.rle_decode(pm))
                canvas[edge] = colors[k]
            Image.fromarray(canvas).save(d / f"{f.stem}.png")
            log.info("overlay: %s/%s", vname, f.stem)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcut",
        description="Pseudo-label curation pipeline for video instance "
                    "segmentation")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("extract", help="per-frame instance masks from features")
    p.add_argument("--features-dir", required=True)
    p.add_argument("--flow-features-dir", default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=0.15)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--max-masks", type=int, default=3)
    p.add_argument("--min-area-frac", type=float, default=0.005)
    p.add_argument("--max-area-frac", type=float, default=0.8)
    p.add_argument("--lambda2-max", type=float, default=0.1)
    p.add_argument("--frame-height", type=int, default=0,
                   help="output raster height (0 = patch grid height)")
    p.add_argument("--frame-width", type=int, default=0,
                   help="output raster width (0 = patch grid width)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("curate", help="match masks across frames into a dataset")
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--gaps", default="1,2,3,4")
    p.add_argument("--iou-thresh", type=float, default=0.5)
    p.add_argument("--one-to-one", action="store_true",
                   help="drop repeated second-frame partners (injective tracks)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--score-thresh", type=float, default=0.8,
                   help="detection score cutoff for AP/AR")
    p.add_argument("--jf-score-thresh", type=float, default=0.3,
                   help="detection score cutoff for J/F")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-videos", type=int, default=1)
    p.add_argument("--frames", type=int, default=6)
    p.add_argument("--grid-rows", type=int, default=20)
    p.add_argument("--grid-cols", type=int, default=20)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--objects", type=int, default=2)
    p.add_argument("--shape", choices=synth.SHAPES, default="rectangle")
    p.add_argument("--velocity-min", type=int, default=1)
    p.add_argument("--velocity-max", type=int, default=2)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--distractor", action="store_true")
    p.add_argument("--flow-gap", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("overlay", help="render mask boundaries as PNGs")
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("FLOWCUT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"flowcut: configuration error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, CorruptionError) as exc:
        print(f"flowcut: input format error: {exc}", file=sys.stderr)
        return 3
    except EmptyInputError as exc:
        print(f"flowcut: empty input: {exc}", file=sys.stderr)
        return 4
    except FlowcutError as exc:
        print(f"flowcut: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
