"""File formats and dataset ingestion.

Interchange records are line-delimited JSON (one object per line) with a
leading meta line carrying the format name and, for outputs, the full
effective parameter set so any file can be replayed exactly. Writers are
deterministic: fixed key order and floats printed with 9 significant digits.

Formats:
  annotations.jsonl  {"box_id", "center":[3], "dims":[3], "rotation":[9]}
                     world frame, rotation row-major; "euler":[pitch, roll,
                     yaw] is accepted in place of "rotation" on input.
  manifest.json      {"capture_id", "annotations", "frames":[{"frame_id",
                     "intrinsics":{fx, fy, cx, cy, width, height},
                     "distortion":{k1, k2, k3, p1, p2}, "world_to_camera":
                     [16 row-major], "gravity_to_camera":[9] (optional),
                     "near", "far", "image" (optional), "scene_depth",
                     "sensor_depth" (optional)}]}  paths relative to the
                     manifest's directory.
  detections.jsonl   {"frame_id", "score", "center":[3], "dims":[3], "yaw",
                     "box2d":[4] (optional), "class_id" (optional)}
                     centers in the camera's gravity-aligned frame.
  predictions.jsonl  {"frame_id", "u", "v", "z", "dims":[3], "yaw", "score"}
  gt.jsonl           {"frame_id", "instances":[{"box_id", "center":[3],
                     "dims":[3], "yaw", "box2d":[4],
                     "visible_pixel_fraction", "cut_volume_ratio"}]}
  depth PNG          16-bit single-channel, millimeters, 0 = invalid.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .camera import CameraFrame, Distortion, Intrinsics
from .decode import DepthMap, RawPrediction
from .evaluation import Detection, EvalConfig, EvalReport
from .geometry import Box3D, GravityBox, RigidTransform, rotation_from_euler
from .pipeline import (
    FrameGroundTruth,
    GroundTruthInstance,
    PipelineParams,
    SceneAnnotations,
    render_frame_gt,
)

GT_FILENAME = "gt.jsonl"

ANNOTATIONS_FORMAT = "cubegt/annotations"
DETECTIONS_FORMAT = "cubegt/detections"
FRAME_GT_FORMAT = "cubegt/frame-gt"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# deterministic JSON


def format_float(value):
    """Fixed 9-significant-digit float formatting shared by all writers.

    Negative zero is normalized so equal values always serialize equally.
    """
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(f"cannot serialize non-finite float {value}")
    text = f"{value:.9g}"
    return "0" if text == "-0" else text


def dumps(obj):
    """JSON with insertion-ordered keys and 9-significant-digit floats."""
    if isinstance(obj, dict):
        items = ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _meta_line(fmt, params=None):
    meta = {"format": fmt, "version": FORMAT_VERSION}
    if params is not None:
        meta["params"] = params
    return dumps({"meta": meta})


def _read_jsonl(path, expected_format=None):
    """Yield (line_number, record) for data lines; validates the meta line."""
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{number}: invalid JSON ({exc})") from exc
            if "meta" in record:
                fmt = record["meta"].get("format")
                if expected_format is not None and fmt != expected_format:
                    raise ValueError(
                        f"{path}: format {fmt!r}, expected {expected_format!r}"
                    )
                continue
            yield number, record


# ---------------------------------------------------------------------------
# annotations


def _rotation_from_record(record, where):
    if "rotation" in record:
        rot = np.asarray(record["rotation"], dtype=np.float64)
        if rot.size != 9:
            raise ValueError(f"{where}: rotation must have 9 entries")
        return rot.reshape(3, 3)
    if "euler" in record:
        pitch, roll, yaw = record["euler"]
        return rotation_from_euler(pitch, roll, yaw)
    raise ValueError(f"{where}: missing rotation (or euler) field")


def load_annotations(path, scene_id=None):
    """Load world-frame box annotations; malformed records name the box and
    field in the error."""
    boxes = []
    for number, record in _read_jsonl(path, ANNOTATIONS_FORMAT):
        box_id = record.get("box_id", f"line{number}")
        try:
            box = Box3D(
                np.asarray(record["center"], dtype=np.float64),
                np.asarray(record["dims"], dtype=np.float64),
                _rotation_from_record(record, f"box {box_id!r}"),
                frame="world",
            )
        except KeyError as exc:
            raise ValueError(f"{path}: box {box_id!r} is missing field {exc}") from exc
        except ValueError as exc:
            raise ValueError(f"{path}: box {box_id!r}: {exc}") from exc
        boxes.append((str(box_id), box))
    if scene_id is None:
        scene_id = os.path.splitext(os.path.basename(path))[0]
    return SceneAnnotations(scene_id=scene_id, boxes=tuple(boxes))


def save_annotations(annotations, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_meta_line(ANNOTATIONS_FORMAT) + "\n")
        for box_id, box in annotations.boxes:
            fh.write(
                dumps(
                    {
                        "box_id": box_id,
                        "center": box.center,
                        "dims": box.dims,
                        "rotation": box.rotation.reshape(-1),
                    }
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# depth PNGs (16-bit, millimeters)


def load_depth_png(path):
    with Image.open(path) as img:
        if img.mode not in ("I", "I;16"):
            raise ValueError(
                f"{path}: depth PNG must be 16-bit single-channel, got mode {img.mode!r}"
            )
        values = np.asarray(img, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"{path}: depth PNG must be single-channel")
    return DepthMap(values / 1000.0)


def save_depth_png(depth, path):
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    mm = np.round(values * 1000.0).astype(np.uint16)
    Image.fromarray(mm).save(path)  # uint16 -> 16-bit single channel


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    camera: CameraFrame
    scene_depth_path: str
    sensor_depth_path: str | None = None
    image_path: str | None = None


@dataclass(frozen=True)
class CaptureManifest:
    capture_id: str
    annotations_path: str
    frames: tuple


def load_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    base = os.path.dirname(os.path.abspath(path))

    def resolve(rel, required, what):
        if rel is None:
            return None
        full = os.path.join(base, rel)
        if required and not os.path.exists(full):
            raise ValueError(f"{path}: {what} file not found: {rel}")
        return full

    try:
        capture_id = doc["capture_id"]
        annotations_path = resolve(doc["annotations"], True, "annotations")
        frames = []
        seen = set()
        for rec in doc["frames"]:
            frame_id = str(rec["frame_id"])
            if frame_id in seen:
                raise ValueError(f"{path}: duplicate frame_id {frame_id!r}")
            seen.add(frame_id)
            k = rec["intrinsics"]
            intrinsics = Intrinsics(
                float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]),
                int(k["width"]), int(k["height"]),
            )
            d = rec.get("distortion", {})
            distortion = Distortion(
                float(d.get("k1", 0.0)), float(d.get("k2", 0.0)), float(d.get("k3", 0.0)),
                float(d.get("p1", 0.0)), float(d.get("p2", 0.0)),
            )
            pose = RigidTransform.from_matrix(
                np.asarray(rec["world_to_camera"], dtype=np.float64).reshape(4, 4)
            )
            gravity = rec.get("gravity_to_camera")
            if gravity is not None:
                gravity = np.asarray(gravity, dtype=np.float64).reshape(3, 3)
            camera = CameraFrame(
                intrinsics,
                distortion,
                pose,
                gravity,
                float(rec.get("near", 0.1)),
                float(rec.get("far", 5.0)),
            )
            frames.append(
                FrameRecord(
                    frame_id=frame_id,
                    camera=camera,
                    scene_depth_path=resolve(rec["scene_depth"], True, "scene depth"),
                    sensor_depth_path=resolve(rec.get("sensor_depth"), True, "sensor depth"),
                    image_path=resolve(rec.get("image"), False, "image"),
                )
            )
    except KeyError as exc:
        raise ValueError(f"{path}: manifest is missing field {exc}") from exc
    return CaptureManifest(
        capture_id=str(capture_id), annotations_path=annotations_path, frames=tuple(frames)
    )


# ---------------------------------------------------------------------------
# detections and raw predictions


def load_detections(path):
    """Detections grouped by frame_id; det ids follow file order."""
    per_frame = {}
    for number, record in _read_jsonl(path, DETECTIONS_FORMAT):
        try:
            det = Detection(
                frame_id=str(record["frame_id"]),
                score=float(record["score"]),
                box=GravityBox(
                    np.asarray(record["center"], dtype=np.float64),
                    np.asarray(record["dims"], dtype=np.float64),
                    float(record["yaw"]),
                ),
                box2d=tuple(record["box2d"]) if record.get("box2d") is not None else None,
                class_id=record.get("class_id"),
                det_id=len(per_frame.get(str(record["frame_id"]), [])),
            )
        except KeyError as exc:
            raise ValueError(f"{path}:{number}: detection missing field {exc}") from exc
        except ValueError as exc:
            raise ValueError(f"{path}:{number}: {exc}") from exc
        per_frame.setdefault(det.frame_id, []).append(det)
    return per_frame


def save_detections(per_frame, path, params=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_meta_line(DETECTIONS_FORMAT, params) + "\n")
        for frame_id in sorted(per_frame):
            for det in per_frame[frame_id]:
                record = {
                    "frame_id": det.frame_id,
                    "score": det.score,
                    "center": det.box.center,
                    "dims": det.box.dims,
                    "yaw": det.box.yaw,
                }
                if det.box2d is not None:
                    record["box2d"] = list(det.box2d)
                if det.class_id is not None:
                    record["class_id"] = det.class_id
                fh.write(dumps(record) + "\n")


def load_predictions(path):
    """Raw per-frame predictions for decoding, in file order."""
    rows = []
    for number, record in _read_jsonl(path):
        try:
            rows.append(
                (
                    str(record["frame_id"]),
                    RawPrediction(
                        u=float(record["u"]),
                        v=float(record["v"]),
                        z=float(record["z"]),
                        dims=np.asarray(record["dims"], dtype=np.float64),
                        yaw=float(record["yaw"]),
                        score=float(record["score"]),
                    ),
                )
            )
        except KeyError as exc:
            raise ValueError(f"{path}:{number}: prediction missing field {exc}") from exc
        except ValueError as exc:
            raise ValueError(f"{path}:{number}: {exc}") from exc
    return rows


# ---------------------------------------------------------------------------
# frame ground truth


def save_frame_gt(frames, out_dir, params):
    """Write one ground-truth record per frame to <out_dir>/gt.jsonl."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, GT_FILENAME)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_meta_line(FRAME_GT_FORMAT, params.to_dict()) + "\n")
        for frame in frames:
            record = {
                "frame_id": frame.frame_id,
                "instances": [
                    {
                        "box_id": inst.box_id,
                        "center": inst.box.center,
                        "dims": inst.box.dims,
                        "yaw": inst.box.yaw,
                        "box2d": list(inst.box2d),
                        "visible_pixel_fraction": inst.visible_pixel_fraction,
                        "cut_volume_ratio": inst.cut_volume_ratio,
                    }
                    for inst in frame.instances
                ],
            }
            fh.write(dumps(record) + "\n")
    return path


def load_frame_gt(path):
    """Load ground truth from a gt.jsonl file or a directory holding one."""
    if os.path.isdir(path):
        path = os.path.join(path, GT_FILENAME)
    frames = {}
    for number, record in _read_jsonl(path, FRAME_GT_FORMAT):
        try:
            instances = tuple(
                GroundTruthInstance(
                    box_id=str(inst["box_id"]),
                    box=GravityBox(
                        np.asarray(inst["center"], dtype=np.float64),
                        np.asarray(inst["dims"], dtype=np.float64),
                        float(inst["yaw"]),
                    ),
                    box2d=tuple(inst["box2d"]),
                    visible_pixel_fraction=float(inst["visible_pixel_fraction"]),
                    cut_volume_ratio=float(inst["cut_volume_ratio"]),
                    class_id=inst.get("class_id"),
                )
                for inst in record["instances"]
            )
        except KeyError as exc:
            raise ValueError(f"{path}:{number}: instance missing field {exc}") from exc
        frame_id = str(record["frame_id"])
        if frame_id in frames:
            raise ValueError(f"{path}: duplicate frame_id {frame_id!r}")
        frames[frame_id] = FrameGroundTruth(frame_id=frame_id, instances=instances)
    return frames


# ---------------------------------------------------------------------------
# capture rendering (frame-level parallelism)


def render_capture(manifest, params=PipelineParams(), threads=1):
    """Render ground truth for every frame of a capture.

    Frames are independent; with threads > 1 they are processed by a worker
    pool but results keep manifest order, so output is identical for any
    worker count.
    """
    annotations = load_annotations(manifest.annotations_path, scene_id=manifest.capture_id)

    def run(frame):
        scene_depth = load_depth_png(frame.scene_depth_path)
        return render_frame_gt(annotations, frame.camera, scene_depth, params,
                               frame_id=frame.frame_id)

    if threads <= 1:
        return [run(frame) for frame in manifest.frames]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, manifest.frames))


# ---------------------------------------------------------------------------
# evaluation reports


def report_text_lines(report, config):
    """Key-value report, one metric per line, preceded by a provenance block."""
    lines = [f"# config {dumps(config.to_dict())}"]
    for name, value in report.metrics.items():
        lines.append(f"{name} {format_float(round(value, 9))}")
    return lines


def save_eval_report(report, config, out_dir):
    """Write report.txt (key-value) and report.csv (per-cell table)."""
    os.makedirs(out_dir, exist_ok=True)
    text_path = os.path.join(out_dir, "report.txt")
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(report_text_lines(report, config)) + "\n")

    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(f"# config {dumps(config.to_dict())}\n")
        fh.write("class,threshold,bucket,ap,ar,tp,fp,fn,n_gt\n")
        for key in sorted(report.cells):
            cls, threshold, bucket = key
            cell = report.cells[key]
            fh.write(
                f"{cls},{threshold},{bucket},{format_float(round(cell.ap, 9))},"
                f"{format_float(round(cell.ar, 9))},{cell.tp},{cell.fp},{cell.fn},{cell.n_gt}\n"
            )
    return text_path, csv_path
