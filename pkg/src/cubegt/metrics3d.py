"""Oriented 3D box overlap metrics.

iou_gravity is exact for gravity-aligned (yaw-only) boxes: the footprint
intersection is a convex polygon clip in the horizontal plane and the
vertical overlap is an interval. iou_monte_carlo estimates IoU for general
9-DOF pairs and doubles as an independent test oracle.
"""

from __future__ import annotations

import math
import threading

import numpy as np

from . import _kernels
from .geometry import GravityBox, box_corners

_tls = threading.local()


def polygon_area(vertices):
    """Shoelace area; positive for counter-clockwise vertex order."""
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def ensure_ccw(vertices):
    v = np.asarray(vertices, dtype=np.float64)
    return v[::-1] if polygon_area(v) < 0.0 else v


def convex_clip(subject, clip):
    """Sutherland-Hodgman intersection of a simple polygon with a convex one.

    Both inputs are (N, 2) vertex arrays; output vertices keep the subject's
    counter-clockwise order and may be empty, (0, 2), when disjoint.
    """
    output = [tuple(p) for p in ensure_ccw(subject)]
    clip_ccw = ensure_ccw(clip)
    n = len(clip_ccw)
    for i in range(n):
        if not output:
            break
        ax, ay = clip_ccw[i]
        bx, by = clip_ccw[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        polygon = output
        output = []
        sx, sy = polygon[-1]
        s_side = ex * (sy - ay) - ey * (sx - ax)
        for px, py in polygon:
            p_side = ex * (py - ay) - ey * (px - ax)
            if p_side >= 0.0:
                if s_side < 0.0:
                    t = s_side / (s_side - p_side)
                    output.append((sx + t * (px - sx), sy + t * (py - sy)))
                output.append((px, py))
            elif s_side >= 0.0:
                t = s_side / (s_side - p_side)
                output.append((sx + t * (px - sx), sy + t * (py - sy)))
            sx, sy, s_side = px, py, p_side
    if not output:
        return np.zeros((0, 2))
    return np.array(output)


def footprint_rect(box):
    """Horizontal footprint of a gravity-aligned box, (4, 2) counter-clockwise."""
    l, w = box.dims[0] * 0.5, box.dims[1] * 0.5
    local = np.array([[-l, -w], [l, -w], [l, w], [-l, w]])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + box.center[:2]


def iou_gravity(a, b):
    """Exact IoU of two gravity-aligned boxes, clamped to [0, 1].

    Box volumes go through the same shoelace-area path as the intersection
    so that identical boxes score exactly 1.
    """
    rect_a, rect_b = footprint_rect(a), footprint_rect(b)
    inter_area = polygon_area(convex_clip(rect_a, rect_b))
    if inter_area <= 0.0:
        return 0.0
    za0, za1 = a.center[2] - a.dims[2] * 0.5, a.center[2] + a.dims[2] * 0.5
    zb0, zb1 = b.center[2] - b.dims[2] * 0.5, b.center[2] + b.dims[2] * 0.5
    dz = min(za1, zb1) - max(za0, zb0)
    if dz <= 0.0:
        return 0.0
    inter = inter_area * dz
    vol_a = polygon_area(rect_a) * (za1 - za0)
    vol_b = polygon_area(rect_b) * (zb1 - zb0)
    union = vol_a + vol_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def _sample_buffer(n):
    buf = getattr(_tls, "mc_samples", None)
    if buf is None or len(buf) < n:
        buf = np.empty((n, 3))
        _tls.mc_samples = buf
    return buf[:n]


def iou_monte_carlo(a, b, samples, seed=0):
    """Rejection-sampled IoU estimate over the pair's joint AABB.

    Deterministic for a fixed seed. Identical boxes score exactly 1 because
    every sample lands in both or neither; a pair the samples never hit
    scores 0. Counting runs on the compiled kernel when available; the
    sample buffer is reused per thread.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    box_a = a.to_box3d() if isinstance(a, GravityBox) else a
    box_b = b.to_box3d() if isinstance(b, GravityBox) else b
    corners = np.concatenate([box_corners(box_a), box_corners(box_b)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)

    unit = _sample_buffer(int(samples))
    np.random.default_rng(seed).random(out=unit)
    n_a, n_b, n_both = _kernels.count_box_pair(
        unit, lo, hi - lo,
        box_a.rotation, box_a.center @ box_a.rotation, box_a.dims * 0.5,
        box_b.rotation, box_b.center @ box_b.rotation, box_b.dims * 0.5,
    )
    n_union = n_a + n_b - n_both
    if n_union == 0:
        return 0.0
    return n_both / n_union


def chamfer_corner_distance(a, b):
    """Symmetric mean nearest-corner distance between two boxes, meters."""
    ca, cb = box_corners(a), box_corners(b)
    d2 = np.sum((ca[:, None, :] - cb[None, :, :]) ** 2, axis=2)
    d = np.sqrt(d2)
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def rect_iou(a, b):
    """Plain 2D IoU of (x1, y1, x2, y2) rectangles."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0.0 else 0.0
