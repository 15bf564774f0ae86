"""Command-line interface.

Subcommands: render-gt (manifest -> per-frame ground truth), eval (ground
truth + detections -> AP/AR report), iou (two boxes -> exact and optional
Monte Carlo IoU), decode (raw predictions -> metric detections).

Exit codes: 0 success, 1 validation/usage error, 2 I/O error. The
CUBIFY_THREADS environment variable overrides --threads.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import io
from .decode import decode, depth_stats
from .evaluation import Detection, EvalConfig, evaluate
from .geometry import GravityBox
from .metrics3d import iou_gravity, iou_monte_carlo
from .pipeline import PipelineParams


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_resolution(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise ValueError(f"bad resolution {text!r}, expected WxH") from exc


def _parse_floats(text):
    return tuple(float(v) for v in text.split(","))


def _parse_buckets(text):
    buckets = []
    for part in text.split(","):
        lo, hi = part.split("-")
        buckets.append((float(lo), float(hi)))
    return tuple(buckets)


def _parse_box(text):
    values = _parse_floats(text)
    if len(values) != 7:
        raise ValueError(f"box must be cx,cy,cz,l,w,h,yaw (7 values), got {len(values)}")
    return GravityBox(np.array(values[:3]), np.array(values[3:6]), values[6])


def _threads(args):
    env = os.environ.get("CUBIFY_THREADS")
    if env is not None:
        return max(int(env), 1)
    return max(args.threads, 1)


def build_parser():
    parser = _Parser(prog="cubegt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render-gt", help="render per-frame ground truth for a capture")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-res", default="320x240", help="render resolution WxH")
    p.add_argument("--subdivisions", type=int, default=8)
    p.add_argument("--keep-ratio", type=float, default=0.25)
    p.add_argument("--occlusion-margin", type=float, default=0.05)
    p.add_argument("--ray-stride", type=int, default=1)
    p.add_argument("--min-visible-pixels", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--gt", required=True, help="gt.jsonl file or its directory")
    p.add_argument("--dets", required=True)
    p.add_argument("--iou", default="0.25,0.5", help="comma-separated thresholds")
    p.add_argument("--max-dets", type=int, default=100)
    p.add_argument("--buckets", default="0-2,2-4,4-5")
    p.add_argument("--class-agnostic", action="store_true")
    p.add_argument("--box2d-ar", action="store_true",
                   help="also report 2D-box AR at the 0.5/0.75 rectangle IoU")
    p.add_argument("--out", default=None, help="directory for report.txt/report.csv")

    p = sub.add_parser("iou", help="IoU of two gravity-aligned boxes")
    p.add_argument("--a", required=True, help="cx,cy,cz,l,w,h,yaw")
    p.add_argument("--b", required=True, help="cx,cy,cz,l,w,h,yaw")
    p.add_argument("--mc-samples", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("decode", help="decode raw predictions into detections")
    p.add_argument("--preds", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--depth-stats", choices=["from-sensor"], default=None,
                   help="rescale with per-frame sensor-depth affine statistics")
    p.add_argument("--out", required=True)
    return parser


def _cmd_render_gt(args):
    manifest = io.load_manifest(args.manifest)
    params = PipelineParams(
        render_resolution=_parse_resolution(args.mask_res),
        subdivisions=args.subdivisions,
        keep_ratio=args.keep_ratio,
        occlusion_margin=args.occlusion_margin,
        ray_stride=args.ray_stride,
        min_visible_pixels=args.min_visible_pixels,
    )
    frames = io.render_capture(manifest, params, threads=_threads(args))
    path = io.save_frame_gt(frames, args.out, params)
    total = sum(len(f.instances) for f in frames)
    print(f"wrote {len(frames)} frames ({total} instances) to {path}")
    return 0


def _cmd_eval(args):
    gt = io.load_frame_gt(args.gt)
    dets = io.load_detections(args.dets)
    config = EvalConfig(
        iou_thresholds=_parse_floats(args.iou),
        max_detections_per_frame=args.max_dets,
        class_agnostic=args.class_agnostic,
        distance_buckets=_parse_buckets(args.buckets),
        box2d_ar=args.box2d_ar,
    )
    report = evaluate(dets, gt, config)
    for line in io.report_text_lines(report, config):
        print(line)
    if args.out is not None:
        text_path, csv_path = io.save_eval_report(report, config, args.out)
        print(f"# wrote {text_path} and {csv_path}")
    return 0


def _cmd_iou(args):
    box_a, box_b = _parse_box(args.a), _parse_box(args.b)
    print(f"iou {io.format_float(iou_gravity(box_a, box_b))}")
    if args.mc_samples > 0:
        value = iou_monte_carlo(box_a, box_b, args.mc_samples, seed=args.seed)
        print(f"iou_mc {io.format_float(value)}")
    return 0


def _cmd_decode(args):
    manifest = io.load_manifest(args.manifest)
    frames = {f.frame_id: f for f in manifest.frames}
    predictions = io.load_predictions(args.preds)

    stats_cache = {}

    def stats_for(frame):
        if args.depth_stats is None:
            return None
        if frame.frame_id not in stats_cache:
            if frame.sensor_depth_path is None:
                raise ValueError(
                    f"frame {frame.frame_id!r} has no sensor depth for --depth-stats"
                )
            stats_cache[frame.frame_id] = depth_stats(io.load_depth_png(frame.sensor_depth_path))
        return stats_cache[frame.frame_id]

    per_frame = {}
    rejected = 0
    for frame_id, pred in predictions:
        if frame_id not in frames:
            raise ValueError(f"prediction references unknown frame_id {frame_id!r}")
        frame = frames[frame_id]
        box = decode(pred, frame.camera, stats_for(frame))
        if box is None:
            rejected += 1
            continue
        per_frame.setdefault(frame_id, []).append(
            Detection(frame_id=frame_id, score=pred.score, box=box,
                      det_id=len(per_frame.get(frame_id, [])))
        )
    io.save_detections(
        per_frame,
        args.out,
        params={
            "capture_id": manifest.capture_id,
            "depth_stats": args.depth_stats or "none",
        },
    )
    kept = sum(len(v) for v in per_frame.values())
    print(f"decoded {kept} detections ({rejected} rejected) to {args.out}")
    return 0


_COMMANDS = {
    "render-gt": _cmd_render_gt,
    "eval": _cmd_eval,
    "iou": _cmd_iou,
    "decode": _cmd_decode,
}


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=os.environ.get("CUBEGT_LOG", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except (ValueError, KeyError) as exc:
        print(f"cubegt: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cubegt: i/o error: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
