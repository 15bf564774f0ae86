"""Distortion-aware software rasterization of one 3D box into a binary mask
with per-pixel depth.

Boxes are tessellated so straight edges stay pixel-accurate under lens
distortion, projected per vertex, and filled with a pixel-center coverage
test (top-left rule). Back faces are kept; the box is watertight and only
the nearest surface matters, so the depth buffer keeps the minimum z.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from PIL import Image

from . import _kernels
from .camera import max_monotone_radius, project_points
from .geometry import Box3D, box_corners

DEPTH_MAGIC = b"CUBD"
MIN_VERTEX_Z = 1e-9

DEFAULT_RESOLUTION = (320, 240)
DEFAULT_SUBDIVISIONS = 8


@dataclass(frozen=True)
class InstanceRender:
    """Binary coverage mask plus nearest-surface depth for one box."""

    width: int
    height: int
    mask: np.ndarray
    depth: np.ndarray
    box_id: object

    def __post_init__(self):
        if self.mask.shape != (self.height, self.width):
            raise ValueError(f"mask shape {self.mask.shape} != (h, w)")
        if self.depth.shape != (self.height, self.width):
            raise ValueError(f"depth shape {self.depth.shape} != (h, w)")
        finite = np.isfinite(self.depth)
        if not np.array_equal(finite, self.mask):
            raise ValueError("depth must be finite exactly where mask is set")
        if finite.any() and not np.all(self.depth[finite] > 0.0):
            raise ValueError("finite depths must be positive")

    @cached_property
    def pixel_count(self):
        return int(self.mask.sum())


_UNIT_TESSELLATION = {}  # subdivisions -> (12 s^2 * 3, 3) unit-box triangle vertices


def _unit_tessellation(s):
    cached = _UNIT_TESSELLATION.get(s)
    if cached is not None:
        return cached
    grid = np.linspace(-0.5, 0.5, s + 1)
    faces = []
    for axis in range(3):
        b_axis, c_axis = (axis + 1) % 3, (axis + 2) % 3
        bb, cc = np.meshgrid(grid, grid, indexing="ij")
        for sign in (-0.5, 0.5):
            verts = np.empty((s + 1, s + 1, 3))
            verts[..., axis] = sign
            verts[..., b_axis] = bb
            verts[..., c_axis] = cc
            v00 = verts[:-1, :-1].reshape(-1, 3)
            v10 = verts[1:, :-1].reshape(-1, 3)
            v01 = verts[:-1, 1:].reshape(-1, 3)
            v11 = verts[1:, 1:].reshape(-1, 3)
            faces.append(np.stack([v00, v10, v11], axis=1))
            faces.append(np.stack([v00, v11, v01], axis=1))
    _UNIT_TESSELLATION[s] = np.concatenate(faces).reshape(-1, 3)
    return _UNIT_TESSELLATION[s]


def tessellate_box(box, subdivisions):
    """Split the 6 faces into subdivisions^2 quads each: (12 * s^2, 3, 3)
    camera-space triangles whose vertex union covers all 8 corners."""
    if subdivisions < 1:
        raise ValueError("subdivisions must be >= 1")
    local = _unit_tessellation(int(subdivisions)) * box.dims
    return (local @ box.rotation.T + box.center).reshape(-1, 3, 3)


def _project_box_triangles(camera, box, subdivisions, width, height):
    """Tessellate and project one camera-space box; returns (tri_uv, tri_z)
    restricted to drawable triangles, or None when nothing can cover a pixel.

    Vertices behind the camera or beyond the distortion polynomial's monotone
    radius are invalid and triangles touching them are dropped (their
    projections would fold back into the image).
    """
    tris = tessellate_box(box, subdivisions)
    verts = tris.reshape(-1, 3)

    uv, in_front = project_points(camera, verts)
    valid = in_front & (verts[:, 2] > MIN_VERTEX_Z)
    r_max = max_monotone_radius(camera.distortion)
    if np.isfinite(r_max):
        with np.errstate(divide="ignore", invalid="ignore"):
            radius = np.hypot(verts[:, 0] / verts[:, 2], verts[:, 1] / verts[:, 2])
        valid &= radius <= r_max

    tri_ok = valid.reshape(-1, 3).all(axis=1)
    if not tri_ok.any():
        return None

    tri_uv = uv.reshape(-1, 3, 2)[tri_ok]
    tri_z = verts[:, 2].reshape(-1, 3)[tri_ok]

    # Whole triangle on one side of the image: cannot cover any pixel center.
    u, v = tri_uv[..., 0], tri_uv[..., 1]
    onscreen = ~(
        (u.max(axis=1) < 0.0)
        | (u.min(axis=1) > width)
        | (v.max(axis=1) < 0.0)
        | (v.min(axis=1) > height)
    )
    if not onscreen.any():
        return None
    return np.ascontiguousarray(tri_uv[onscreen]), np.ascontiguousarray(tri_z[onscreen])


def rasterize_box(camera, box, resolution=DEFAULT_RESOLUTION,
                  subdivisions=DEFAULT_SUBDIVISIONS, box_id=None):
    """Render one camera-space box; an entirely-behind box gives an empty render."""
    if box.frame != "camera":
        raise ValueError(f"box must be in the camera frame, got {box.frame!r}")
    width, height = resolution
    projected = _project_box_triangles(camera, box, subdivisions, width, height)
    if projected is None:
        return _empty_render(width, height, box_id)
    depth = _kernels.fill_triangles(projected[0], projected[1], width, height)
    return _trusted_render(width, height, np.isfinite(depth), depth, box_id)


@dataclass(frozen=True)
class WindowRender:
    """A render cropped to the silhouette's pixel bbox; (x0, y0) is the
    window origin in full-image pixels. Used by the pipeline fast path."""

    x0: int
    y0: int
    mask: np.ndarray
    depth: np.ndarray
    box_id: object

    @cached_property
    def pixel_count(self):
        return int(self.mask.sum())


def rasterize_box_window(camera, box, resolution=DEFAULT_RESOLUTION,
                         subdivisions=DEFAULT_SUBDIVISIONS, box_id=None):
    """Like rasterize_box but fills only the projected bounding window.

    Pixel-center coverage is evaluated in window coordinates, which can
    differ from the full-frame rasterization by one ulp on exact edge ties;
    returns None for an empty render.
    """
    width, height = resolution
    projected = _project_box_triangles(camera, box, subdivisions, width, height)
    if projected is None:
        return None
    tri_uv, tri_z = projected
    x0 = max(int(np.ceil(tri_uv[..., 0].min() - 0.5)), 0)
    x1 = min(int(np.floor(tri_uv[..., 0].max() - 0.5)), width - 1)
    y0 = max(int(np.ceil(tri_uv[..., 1].min() - 0.5)), 0)
    y1 = min(int(np.floor(tri_uv[..., 1].max() - 0.5)), height - 1)
    if x0 > x1 or y0 > y1:
        return None
    shifted = tri_uv - np.array([float(x0), float(y0)])
    depth = _kernels.fill_triangles(
        np.ascontiguousarray(shifted), tri_z, x1 - x0 + 1, y1 - y0 + 1
    )
    mask = np.isfinite(depth)
    if not mask.any():
        return None
    return WindowRender(x0, y0, mask, depth, box_id)


def composite_windows(renders, width, height):
    """Nearest-depth compositing of WindowRenders over the full canvas.

    Returns the winner index map (full resolution, -1 where empty); ties go
    to the lower box_id, matching composite_visibility.
    """
    winner = np.full((height, width), -1, dtype=np.int32)
    best = np.full((height, width), np.inf)
    order = sorted(range(len(renders)), key=lambda i: (str(renders[i].box_id), i))
    for idx in order:
        r = renders[idx]
        h, w = r.depth.shape
        window = np.s_[r.y0 : r.y0 + h, r.x0 : r.x0 + w]
        closer = r.depth < best[window]
        winner[window][closer] = idx
        best[window][closer] = r.depth[closer]
    return winner


def _trusted_render(width, height, mask, depth, box_id):
    """Internal constructor for kernel output, which satisfies the render
    invariants by construction; skips __post_init__ revalidation."""
    render = object.__new__(InstanceRender)
    object.__setattr__(render, "width", width)
    object.__setattr__(render, "height", height)
    object.__setattr__(render, "mask", mask)
    object.__setattr__(render, "depth", depth)
    object.__setattr__(render, "box_id", box_id)
    return render


def _empty_render(width, height, box_id):
    return _trusted_render(
        width,
        height,
        np.zeros((height, width), dtype=bool),
        np.full((height, width), np.inf),
        box_id,
    )


def mask_bbox(mask):
    """Tight (y0, y1, x0, x1) pixel-index bounds of a mask, or None if empty
    (upper bounds inclusive)."""
    rows = np.flatnonzero(mask.any(axis=1))
    if len(rows) == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


def composite_visibility(renders):
    """Assign each pixel to the nearest-depth render; ties go to the lower
    box_id. Returns one visibility mask per input render, in input order:
    each is a subset of its render's mask and the masks are pairwise disjoint.
    """
    if not renders:
        return []
    width, height = renders[0].width, renders[0].height
    for r in renders:
        if (r.width, r.height) != (width, height):
            raise ValueError("all renders must share one resolution")

    order = sorted(range(len(renders)), key=lambda i: (str(renders[i].box_id), i))
    winner = np.full((height, width), -1, dtype=np.int64)
    best = np.full((height, width), np.inf)
    boxes = {}
    for idx in order:
        bbox = mask_bbox(renders[idx].mask)
        if bbox is None:
            continue
        boxes[idx] = bbox
        y0, y1, x0, x1 = bbox
        window = np.s_[y0 : y1 + 1, x0 : x1 + 1]
        depth = renders[idx].depth[window]
        closer = depth < best[window]
        winner[window][closer] = idx
        best[window][closer] = depth[closer]
    out = []
    for idx in range(len(renders)):
        vis = np.zeros((height, width), dtype=bool)
        if idx in boxes:
            y0, y1, x0, x1 = boxes[idx]
            window = np.s_[y0 : y1 + 1, x0 : x1 + 1]
            vis[window] = winner[window] == idx
        out.append(vis)
    return out


def save_mask_png(mask, path):
    """Debug dump: 0/255 8-bit grayscale PNG."""
    Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255, mode="L").save(path)


def save_depth_raw(depth, path):
    """Debug dump: 16-byte header (magic, u32 width, u32 height, u32 reserved)
    then row-major little-endian float32 samples."""
    arr = np.asarray(depth, dtype="<f4")
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC + struct.pack("<III", width, height, 0))
        fh.write(arr.tobytes())


def load_depth_raw(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != DEPTH_MAGIC:
            raise ValueError(f"{path}: not a depth dump (bad magic)")
        width, height, _ = struct.unpack("<III", header[4:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != width * height:
        raise ValueError(f"{path}: truncated depth dump")
    return data.reshape(height, width).astype(np.float64)
