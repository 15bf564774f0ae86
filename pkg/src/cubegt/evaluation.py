"""Dataset-level AP/AR at 3D IoU thresholds, with per-frame detection caps
and distance-bucketed breakdowns.

Matching is COCO-style greedy per frame; precision/recall accumulates over
the whole dataset ordered by score (ties broken by frame id then detection
id, so reports are invariant to input ordering). AP averages the monotone
precision envelope over an evenly spaced recall grid; the recall-zero grid
node is excluded from the average so that closed-form hand fixtures come
out exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import greedy_match
from .geometry import GravityBox
from .metrics3d import iou_gravity, rect_iou


@dataclass(frozen=True)
class Detection:
    frame_id: str
    score: float
    box: GravityBox
    box2d: tuple | None = None
    class_id: int | None = None
    det_id: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple = (0.25, 0.50)
    max_detections_per_frame: int = 100
    class_agnostic: bool = False
    distance_buckets: tuple = ((0.0, 2.0), (2.0, 4.0), (4.0, 5.0))
    interpolation_points: int = 101
    box2d_ar: bool = False
    iou_thresholds_2d: tuple = (0.50, 0.75)

    def __post_init__(self):
        for t in self.iou_thresholds:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"IoU threshold {t} outside (0, 1]")
        prev_hi = -math.inf
        for lo, hi in self.distance_buckets:
            if lo >= hi or lo < prev_hi:
                raise ValueError("distance buckets must be ascending and non-overlapping")
            prev_hi = hi
        if self.max_detections_per_frame < 1:
            raise ValueError("max_detections_per_frame must be >= 1")
        if self.interpolation_points < 2:
            raise ValueError("interpolation_points must be >= 2")

    def to_dict(self):
        return {
            "iou_thresholds": list(self.iou_thresholds),
            "max_detections_per_frame": self.max_detections_per_frame,
            "class_agnostic": self.class_agnostic,
            "distance_buckets": [list(b) for b in self.distance_buckets],
            "interpolation_points": self.interpolation_points,
            "box2d_ar": self.box2d_ar,
            "iou_thresholds_2d": list(self.iou_thresholds_2d),
        }


@dataclass(frozen=True)
class MetricCell:
    ap: float
    ar: float
    tp: int
    fp: int
    fn: int
    n_gt: int
    pr_curve: tuple


@dataclass(frozen=True)
class EvalReport:
    """Class-averaged metrics plus the per-(class, threshold, bucket) cells.

    ``metrics`` maps names like AP25, AR50 or AP25[0-2m] to class-averaged
    values; ``cells`` is keyed by (class_label, threshold_label, bucket_label)
    with bucket_label "all" for the unbucketed cell.
    """

    metrics: dict
    cells: dict
    classes: tuple


def bucket_of(box_or_center, buckets):
    """Index of the half-open [lo, hi) bucket holding the center's distance
    from the camera origin; None beyond every bucket."""
    center = box_or_center.center if hasattr(box_or_center, "center") else box_or_center
    dist = float(np.linalg.norm(np.asarray(center, dtype=np.float64)))
    for idx, (lo, hi) in enumerate(buckets):
        if lo <= dist < hi:
            return idx
    return None


def ap_from_pr(points, interpolation_points=101):
    """Average interpolated precision over an even recall grid.

    The precision envelope is made non-increasing right to left and sampled
    at the positive recall values of a uniform [0, 1] grid with
    ``interpolation_points`` nodes (the r=0 node is excluded from the
    average). Empty input gives 0.
    """
    pts = [(float(r), float(p)) for r, p in points]
    if not pts:
        return 0.0
    recall = np.array([r for r, _ in pts])
    if np.any(np.diff(recall) < 0.0):
        raise ValueError("recall values must be non-decreasing")
    envelope = np.array([p for _, p in pts])
    envelope = np.maximum.accumulate(envelope[::-1])[::-1]

    grid = np.linspace(0.0, 1.0, interpolation_points)[1:]
    idx = np.searchsorted(recall, grid, side="left")
    sampled = np.where(idx < len(pts), envelope[np.minimum(idx, len(pts) - 1)], 0.0)
    return float(sampled.mean())


def _threshold_label(threshold):
    return f"{int(round(threshold * 100))}"


def _bucket_label(bucket):
    lo, hi = bucket
    return f"{lo:g}-{hi:g}m"


@dataclass
class _GtEntry:
    box: GravityBox
    class_id: object
    bucket: object
    box2d: tuple | None


@dataclass
class _DetEntry:
    score: float
    frame_id: str
    det_id: int
    box: GravityBox
    class_id: object
    bucket: object
    box2d: tuple | None


def _normalize(detections, gt, config):
    gt_frames = {}
    for frame_id, frame_gt in gt.items():
        instances = getattr(frame_gt, "instances", frame_gt)
        entries = []
        for inst in instances:
            box = getattr(inst, "box", inst)
            entries.append(
                _GtEntry(
                    box=box,
                    class_id=getattr(inst, "class_id", None),
                    bucket=bucket_of(box, config.distance_buckets),
                    box2d=getattr(inst, "box2d", None),
                )
            )
        gt_frames[str(frame_id)] = entries

    det_frames = {}
    for frame_id, dets in detections.items():
        frame_id = str(frame_id)
        if frame_id not in gt_frames:
            raise ValueError(f"detections reference unknown frame_id {frame_id!r}")
        entries = [
            _DetEntry(
                score=d.score,
                frame_id=frame_id,
                det_id=d.det_id if d.det_id is not None else i,
                box=d.box,
                class_id=d.class_id,
                bucket=bucket_of(d.box, config.distance_buckets),
                box2d=d.box2d,
            )
            for i, d in enumerate(dets)
        ]
        entries.sort(key=lambda e: (-e.score, e.det_id))
        det_frames[frame_id] = entries[: config.max_detections_per_frame]
    for frame_id in gt_frames:
        det_frames.setdefault(frame_id, [])
    return det_frames, gt_frames


def _match_cell(det_frames, gt_frames, threshold, iou_fn, det_key=None, gt_key=None):
    """Greedy-match one (threshold, filter) cell; returns scored TP flags and
    the ground-truth count."""
    records = []
    n_gt = 0
    for frame_id in sorted(gt_frames):
        gts = [g for g in gt_frames[frame_id] if gt_key is None or gt_key(g)]
        dets = [d for d in det_frames[frame_id] if det_key is None or det_key(d)]
        n_gt += len(gts)
        matched, _ = greedy_match(dets, gts, iou_fn, threshold)
        for det, gt_idx in zip(dets, matched):
            records.append((det.score, det.frame_id, det.det_id, gt_idx is not None))
    records.sort(key=lambda r: (-r[0], r[1], r[2]))
    return records, n_gt


def _cell_from_records(records, n_gt, config):
    tp_flags = np.array([r[3] for r in records], dtype=bool)
    tp_cum = np.cumsum(tp_flags)
    fp_cum = np.cumsum(~tp_flags)
    if n_gt > 0 and len(records) > 0:
        recall = tp_cum / n_gt
        precision = tp_cum / (tp_cum + fp_cum)
        curve = tuple(zip(recall.tolist(), precision.tolist()))
        ap = ap_from_pr(curve, config.interpolation_points)
    else:
        curve = ()
        ap = 0.0
    tp = int(tp_cum[-1]) if len(records) else 0
    fp = int(fp_cum[-1]) if len(records) else 0
    ar = tp / n_gt if n_gt > 0 else 0.0
    return MetricCell(ap=ap, ar=ar, tp=tp, fp=fp, fn=n_gt - tp, n_gt=n_gt, pr_curve=curve)


def evaluate(detections, gt, config=EvalConfig()):
    """Evaluate per-frame detections against per-frame ground truth.

    ``detections`` maps frame_id to Detection lists; ``gt`` maps frame_id to
    FrameGroundTruth (or plain sequences of objects with a ``box``). Frames
    present in ``gt`` but without detections count their ground truth as
    missed; detections for unknown frames are an error, as is an entirely
    empty ground-truth set.
    """
    det_frames, gt_frames = _normalize(detections, gt, config)
    total_gt = sum(len(v) for v in gt_frames.values())
    if total_gt == 0:
        raise ValueError("ground truth contains no instances")

    if config.class_agnostic:
        classes = [None]
        class_of = lambda e: None
    else:
        classes = sorted(
            {g.class_id for entries in gt_frames.values() for g in entries},
            key=lambda c: (c is not None, c),
        )
        class_of = lambda e: e.class_id

    iou_3d = lambda d, g: iou_gravity(d.box, g.box)
    bucket_labels = [_bucket_label(b) for b in config.distance_buckets]

    cells = {}
    for cls in classes:
        cls_label = "all" if cls is None and len(classes) == 1 else str(cls)
        in_class_d = lambda d, c=cls: class_of(d) == c
        in_class_g = lambda g, c=cls: class_of(g) == c
        for threshold in config.iou_thresholds:
            t_label = _threshold_label(threshold)
            records, n_gt = _match_cell(det_frames, gt_frames, threshold, iou_3d,
                                        in_class_d, in_class_g)
            cells[(cls_label, t_label, "all")] = _cell_from_records(records, n_gt, config)
            for b_idx, b_label in enumerate(bucket_labels):
                records, n_gt = _match_cell(
                    det_frames,
                    gt_frames,
                    threshold,
                    iou_3d,
                    lambda d, c=cls, b=b_idx: class_of(d) == c and d.bucket == b,
                    lambda g, c=cls, b=b_idx: class_of(g) == c and g.bucket == b,
                )
                cells[(cls_label, t_label, b_label)] = _cell_from_records(records, n_gt, config)
        if config.box2d_ar:
            iou_2d = lambda d, g: (
                rect_iou(d.box2d, g.box2d) if d.box2d is not None and g.box2d is not None else 0.0
            )
            for threshold in config.iou_thresholds_2d:
                records, n_gt = _match_cell(det_frames, gt_frames, threshold, iou_2d,
                                            in_class_d, in_class_g)
                cells[(cls_label, f"{_threshold_label(threshold)}_2d", "all")] = (
                    _cell_from_records(records, n_gt, config)
                )

    class_labels = sorted({key[0] for key in cells})
    metrics = {}
    for threshold in config.iou_thresholds:
        t_label = _threshold_label(threshold)
        for b_label in ["all"] + bucket_labels:
            suffix = "" if b_label == "all" else f"[{b_label}]"
            pool = [cells[(c, t_label, b_label)] for c in class_labels]
            pool = [cell for cell in pool if cell.n_gt > 0] or pool
            metrics[f"AP{t_label}{suffix}"] = float(np.mean([c.ap for c in pool]))
            metrics[f"AR{t_label}{suffix}"] = float(np.mean([c.ar for c in pool]))
    if config.box2d_ar:
        for threshold in config.iou_thresholds_2d:
            t_label = _threshold_label(threshold)
            pool = [cells[(c, f"{t_label}_2d", "all")] for c in class_labels]
            pool = [cell for cell in pool if cell.n_gt > 0] or pool
            metrics[f"AR{t_label}_2D"] = float(np.mean([c.ar for c in pool]))

    return EvalReport(metrics=metrics, cells=cells, classes=tuple(class_labels))
