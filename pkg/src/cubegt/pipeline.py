"""Per-frame ground-truth generation.

For one frame the pipeline runs, in order: world-to-camera transform,
frustum culling, per-box rasterization, frustum cutting (rays through each
box's own mask pixels, clipped to the near/far range), nearest-depth
visibility compositing across boxes, scene cutting (rays through visibility
pixels, terminated at the scene depth plus a margin), and a filter dropping
instances that were cut too much or are barely visible. Surviving cut boxes
are converted to gravity-aligned boxes and paired with the tight 2D box of
their visibility mask at full image resolution.

Everything is deterministic for fixed parameters; frames are independent
units of work and may be processed concurrently by the caller.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .camera import build_frustum, frustum_cull, scale_camera, undistort_points
from .decode import DepthMap
from .geometry import (
    MIN_EXTENT,
    Box3D,
    GravityBox,
    _trusted_box,
    box_volume,
    enclosing_gravity_box,
    transform_box,
)
from .raster import composite_windows, rasterize_box_window

log = logging.getLogger("cubegt.pipeline")


@dataclass(frozen=True)
class SceneAnnotations:
    """World-frame 9-DOF boxes for one scene, keyed by unique box ids."""

    scene_id: str
    boxes: tuple

    def __post_init__(self):
        boxes = tuple((str(bid), box) for bid, box in self.boxes)
        ids = [bid for bid, _ in boxes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"scene {self.scene_id!r} has duplicate box ids")
        object.__setattr__(self, "boxes", boxes)


@dataclass(frozen=True)
class PipelineParams:
    render_resolution: tuple = (320, 240)
    subdivisions: int = 8
    keep_ratio: float = 0.25
    occlusion_margin: float = 0.05
    ray_stride: int = 1
    min_visible_pixels: int = 10

    def __post_init__(self):
        w, h = self.render_resolution
        if w < 1 or h < 1:
            raise ValueError("render resolution must be positive")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ValueError("keep_ratio must be in (0, 1]")
        if self.subdivisions < 1 or self.ray_stride < 1:
            raise ValueError("subdivisions and ray_stride must be >= 1")

    def to_dict(self):
        return {
            "render_resolution": list(self.render_resolution),
            "subdivisions": self.subdivisions,
            "keep_ratio": self.keep_ratio,
            "occlusion_margin": self.occlusion_margin,
            "ray_stride": self.ray_stride,
            "min_visible_pixels": self.min_visible_pixels,
        }


@dataclass(frozen=True)
class GroundTruthInstance:
    box_id: str
    box: GravityBox  # cut box in the camera's gravity-aligned frame
    box2d: tuple  # (x1, y1, x2, y2) full-resolution pixels
    visible_pixel_fraction: float
    cut_volume_ratio: float
    class_id: int | None = None


@dataclass(frozen=True)
class FrameGroundTruth:
    frame_id: str
    instances: tuple


def cut_box_to_points(box, points):
    """Shrink a box's local extents to the min/max of ``points``.

    Points are expected (from ray clipping) to lie inside the box within
    1e-6 m. Rotation is preserved; the center moves to the middle of the
    shrunk extents; degenerate extents are floored at 1e-4 m. The result is
    contained in the input box.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("cannot cut a box to an empty point set")
    local = pts @ box.rotation - box.center @ box.rotation
    lo, hi = local.min(axis=0), local.max(axis=0)
    ext = np.maximum(hi - lo, MIN_EXTENT)
    mid = (lo + hi) * 0.5
    return _trusted_box(box.center + box.rotation @ mid, ext, box.rotation, box.frame)


_RAY_CACHE = {}  # (intrinsics, distortion) -> (rays, ray_ok); tiny LRU


def _pixel_rays(camera):
    """Undistorted ray directions (h, w, 3) through every pixel center,
    scaled so the ray parameter equals camera z-depth; NaN where the
    undistortion fails to converge. Cached per (intrinsics, distortion),
    which repeat across the frames of a capture."""
    key = (camera.intrinsics, camera.distortion)
    cached = _RAY_CACHE.get(key)
    if cached is not None:
        return cached
    k = camera.intrinsics
    xs = np.arange(k.width) + 0.5
    ys = np.arange(k.height) + 0.5
    uu, vv = np.meshgrid(xs, ys)
    pix = np.empty((k.width * k.height, 2))
    pix[:, 0] = uu.ravel()
    pix[:, 1] = vv.ravel()
    xy, ok = undistort_points(camera, pix)
    dirs = np.empty((len(xy), 3))
    dirs[:, :2] = xy
    dirs[:, 2] = 1.0
    dirs[~ok] = np.nan
    rays = dirs.reshape(k.height, k.width, 3)
    rays.setflags(write=False)
    ray_ok = np.isfinite(rays[..., 0])
    ray_ok.setflags(write=False)
    if len(_RAY_CACHE) >= 8:
        _RAY_CACHE.pop(next(iter(_RAY_CACHE)))
    _RAY_CACHE[key] = (rays, ray_ok)
    return _RAY_CACHE[key]


def _cut_to_extents(box, n_hit, lo, hi):
    """Build the cut box from kernel-produced local extents; same math as
    cut_box_to_points."""
    if n_hit == 0:
        return None
    ext = np.maximum(hi - lo, MIN_EXTENT)
    mid = (lo + hi) * 0.5
    return _trusted_box(box.center + box.rotation @ mid, ext, box.rotation, box.frame)


def _strided_sample(mask, stride, y0, x0):
    """Subsample a window mask on a stride grid aligned to absolute pixels."""
    if stride <= 1:
        return mask
    keep = np.zeros_like(mask)
    keep[(-y0) % stride :: stride, (-x0) % stride :: stride] = True
    return mask & keep


def render_frame_gt(annotations, camera, scene_depth, params=PipelineParams(),
                    frame_id=""):
    """Run the full per-frame pipeline; returns a FrameGroundTruth."""
    started = time.perf_counter()
    cam_to_gravity = camera.camera_to_gravity()
    k = camera.intrinsics
    if abs(scene_depth.width * k.height - scene_depth.height * k.width) > 1e-6 * k.width * k.height:
        raise ValueError(
            f"scene depth {scene_depth.width}x{scene_depth.height} is not "
            f"registered to the {k.width}x{k.height} image (aspect mismatch)"
        )

    rw, rh = params.render_resolution
    render_cam = scale_camera(camera, rw, rh)
    rays, ray_ok = _pixel_rays(render_cam)

    frustum = build_frustum(camera)
    boxes_cam = [
        (bid, transform_box(box, camera.world_to_camera, frame="camera"))
        for bid, box in annotations.boxes
    ]
    survivors = [(bid, box) for bid, box in boxes_cam if frustum_cull(frustum, box)]

    # Rasterize survivors, then cut each to the frustum along rays through
    # its own mask pixels (near to far).
    renders = []
    cam_boxes = {}
    frustum_cut = {}
    far_fill = np.empty(0)
    for bid, box in survivors:
        render = rasterize_box_window(render_cam, box, (rw, rh), params.subdivisions,
                                      box_id=bid)
        if render is None:
            continue
        window = np.s_[render.y0 : render.y0 + render.mask.shape[0],
                       render.x0 : render.x0 + render.mask.shape[1]]
        sample = _strided_sample(render.mask & ray_ok[window], params.ray_stride,
                                 render.y0, render.x0)
        dirs = rays[window][sample]
        if len(dirs) == 0:
            continue
        if len(far_fill) < len(dirs):
            far_fill = np.full(len(dirs), camera.far)
        n_hit, lo, hi = _kernels.clip_cut_rays(
            np.ascontiguousarray(dirs), camera.near, far_fill[: len(dirs)],
            box.rotation, box.center, box.dims * 0.5,
        )
        cut = _cut_to_extents(box, n_hit, lo, hi)
        if cut is None:
            continue
        renders.append(render)
        cam_boxes[bid] = box
        frustum_cut[bid] = cut

    # Coarse visibility: nearest-depth wins across boxes.
    winner = composite_windows(renders, rw, rh)

    depth_vals = scene_depth.values
    sx = scene_depth.width / rw
    sy = scene_depth.height / rh

    instances = []
    for idx, render in enumerate(renders):
        bid = render.box_id
        window = np.s_[render.y0 : render.y0 + render.mask.shape[0],
                       render.x0 : render.x0 + render.mask.shape[1]]
        wy, wx = np.nonzero((winner[window] == idx) & ray_ok[window])
        if len(wy) == 0:
            continue
        ys, xs = wy + render.y0, wx + render.x0
        # Scene cut: terminate each visible ray at the scene depth (plus a
        # margin for sensor noise); invalid depth falls back to the far plane.
        dy = np.minimum((ys * sy + 0.5 * sy).astype(np.int64), scene_depth.height - 1)
        dx = np.minimum((xs * sx + 0.5 * sx).astype(np.int64), scene_depth.width - 1)
        d = depth_vals[dy, dx]
        t_hi = np.where(d > 0.0, d + params.occlusion_margin, camera.far)
        visible, lo, hi = _kernels.clip_cut_rays(
            np.ascontiguousarray(rays[ys, xs]), 0.0, t_hi,
            frustum_cut[bid].rotation, frustum_cut[bid].center,
            frustum_cut[bid].dims * 0.5,
        )
        if visible < max(params.min_visible_pixels, 1):
            continue
        cut_box = _cut_to_extents(frustum_cut[bid], visible, lo, hi)

        ratio = min(box_volume(cut_box) / box_volume(cam_boxes[bid]), 1.0)
        if ratio < params.keep_ratio:
            continue
        fraction = min(visible / render.pixel_count, 1.0)

        x0, x1 = xs.min(), xs.max() + 1
        y0, y1 = ys.min(), ys.max() + 1
        box2d = (
            x0 * k.width / rw,
            y0 * k.height / rh,
            x1 * k.width / rw,
            y1 * k.height / rh,
        )
        instances.append(
            GroundTruthInstance(
                box_id=bid,
                box=enclosing_gravity_box(cut_box, cam_to_gravity),
                box2d=box2d,
                visible_pixel_fraction=fraction,
                cut_volume_ratio=ratio,
            )
        )

    instances.sort(key=lambda inst: inst.box_id)
    log.info(
        "%s",
        json.dumps(
            {
                "event": "frame_gt",
                "frame_id": frame_id,
                "boxes": len(annotations.boxes),
                "culled": len(annotations.boxes) - len(survivors),
                "rendered": len(renders),
                "retained": len(instances),
                "elapsed_ms": round((time.perf_counter() - started) * 1e3, 3),
            },
            sort_keys=True,
        ),
    )
    return FrameGroundTruth(frame_id=frame_id, instances=tuple(instances))
