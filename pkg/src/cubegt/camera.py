"""Camera projection with Brown-Conrady distortion, iterative undistortion,
backprojection and frustum construction/culling.

Pixel coordinates are continuous with the origin at the top-left corner of
pixel (0, 0); the center of pixel (i, j) is (i + 0.5, j + 0.5). Camera space
is right-handed with +x right, +y down, +z forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box3D, RigidTransform, box_corners, check_rotation

UNDISTORT_MAX_ITER = 20
UNDISTORT_TOL = 1e-10


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class Distortion:
    """Brown-Conrady coefficients; all zero means an exact pinhole."""

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "p1", "p2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"distortion coefficient {name} must be finite")

    @property
    def is_zero(self):
        return self.k1 == self.k2 == self.k3 == self.p1 == self.p2 == 0.0


@dataclass(frozen=True)
class CameraFrame:
    """Per-frame camera: intrinsics, distortion, pose and clipping range.

    ``gravity_to_camera`` maps gravity-aligned coordinates (z up) into camera
    coordinates; it is optional because only gravity-aware consumers need it.
    """

    intrinsics: Intrinsics
    distortion: Distortion = field(default_factory=Distortion)
    world_to_camera: RigidTransform = field(default_factory=RigidTransform.identity)
    gravity_to_camera: np.ndarray | None = None
    near: float = 0.1
    far: float = 5.0

    def __post_init__(self):
        if not (0.0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got {self.near}, {self.far}")
        if self.gravity_to_camera is not None:
            object.__setattr__(
                self,
                "gravity_to_camera",
                check_rotation(self.gravity_to_camera, name="gravity_to_camera"),
            )

    def camera_to_gravity(self):
        if self.gravity_to_camera is None:
            raise ValueError("camera frame has no gravity rotation")
        return self.gravity_to_camera.T


def distort_normalized(distortion, x, y):
    """Apply radial + tangential distortion to normalized coordinates."""
    if distortion.is_zero:
        return x, y
    r2 = x * x + y * y
    radial = 1.0 + r2 * (distortion.k1 + r2 * (distortion.k2 + r2 * distortion.k3))
    xd = x * radial + 2.0 * distortion.p1 * x * y + distortion.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + distortion.p1 * (r2 + 2.0 * y * y) + 2.0 * distortion.p2 * x * y
    return xd, yd


def project_points(camera, points):
    """Project (N, 3) camera-space points to pixels.

    Returns (uv (N, 2), valid (N,)); uv rows with z <= 0 are NaN and marked
    invalid.
    """
    pts = np.asarray(points, dtype=np.float64)
    k = camera.intrinsics
    valid = pts[:, 2] > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        x = pts[:, 0] / pts[:, 2]
        y = pts[:, 1] / pts[:, 2]
        xd, yd = distort_normalized(camera.distortion, x, y)
        uv = np.empty((len(pts), 2))
        uv[:, 0] = k.fx * xd + k.cx
        uv[:, 1] = k.fy * yd + k.cy
    if not valid.all():
        uv[~valid] = np.nan
    return uv, valid


def project(camera, point):
    """Project one camera-space point; None when at or behind the camera."""
    uv, valid = project_points(camera, np.asarray(point, dtype=np.float64)[None, :])
    if not valid[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def undistort_points(camera, pixels, max_iter=UNDISTORT_MAX_ITER, tol=UNDISTORT_TOL):
    """Invert distortion for (N, 2) pixels by fixed-point iteration.

    Returns (xy (N, 2) normalized undistorted coordinates, converged (N,)).
    With zero distortion the first iterate is exact.
    """
    px = np.asarray(pixels, dtype=np.float64)
    k = camera.intrinsics
    xd = (px[:, 0] - k.cx) / k.fx
    yd = (px[:, 1] - k.cy) / k.fy
    if camera.distortion.is_zero:
        out = np.empty((len(px), 2))
        out[:, 0] = xd
        out[:, 1] = yd
        return out, np.ones(len(px), dtype=bool)

    d = camera.distortion
    x, y = xd.copy(), yd.copy()
    converged = np.zeros(len(px), dtype=bool)
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3))
        dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x)
        dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y
        x_new = (xd - dx) / radial
        y_new = (yd - dy) / radial
        step = np.maximum(np.abs(x_new - x), np.abs(y_new - y))
        x, y = x_new, y_new
        converged |= step < tol
        if converged.all():
            break
    return np.stack([x, y], axis=1), converged


def undistort(camera, u, v):
    """Invert distortion for one pixel; raises ValueError on non-convergence."""
    xy, ok = undistort_points(camera, np.array([[u, v]], dtype=np.float64))
    if not ok[0]:
        raise ValueError(f"undistortion did not converge at pixel ({u}, {v})")
    return float(xy[0, 0]), float(xy[0, 1])


def backproject(camera, u, v, z):
    """Camera-space point seen at pixel (u, v) with depth z along the z axis."""
    if z <= 0.0:
        raise ValueError(f"depth must be positive, got {z}")
    x, y = undistort(camera, u, v)
    return np.array([x * z, y * z, z])


def max_monotone_radius(distortion, probe_radius=8.0, steps=4096):
    """Largest normalized radius up to which radial distortion is increasing.

    Beyond this radius the distortion polynomial folds back and projections
    are meaningless; the rasterizer discards such vertices. Infinite for a
    monotone (e.g. zero) polynomial.
    """
    if distortion.k1 == distortion.k2 == distortion.k3 == 0.0:
        return math.inf
    r = np.linspace(0.0, probe_radius, steps)
    r2 = r * r
    f = r * (1.0 + r2 * (distortion.k1 + r2 * (distortion.k2 + r2 * distortion.k3)))
    falling = np.nonzero(np.diff(f) <= 0.0)[0]
    if len(falling) == 0:
        return math.inf
    return float(r[falling[0]])


@dataclass(frozen=True)
class Frustum:
    """Six planes; a point p is inside iff normals @ p + offsets >= 0 for all."""

    normals: np.ndarray
    offsets: np.ndarray

    def contains_points(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return np.all(pts @ self.normals.T + self.offsets >= 0.0, axis=-1)


def _border_pixels(width, height, samples_per_edge):
    t = np.linspace(0.0, 1.0, samples_per_edge + 1)
    xs, ys = t * width, t * height
    top = np.stack([xs, np.zeros_like(xs)], axis=1)
    bottom = np.stack([xs, np.full_like(xs, float(height))], axis=1)
    left = np.stack([np.zeros_like(ys), ys], axis=1)
    right = np.stack([np.full_like(ys, float(width)), ys], axis=1)
    return np.concatenate([top, bottom, left, right])


def build_frustum(camera, samples_per_edge=16):
    """Frustum from the near/far range and the undistorted image border.

    Side planes bound the min/max undistorted ray slopes over sampled border
    pixels (corners included); under distortion this is conservative, and
    with zero distortion it reduces exactly to the four corner-ray planes.
    """
    k = camera.intrinsics
    border = _border_pixels(k.width, k.height, samples_per_edge)
    xy, ok = undistort_points(camera, border)
    if not ok.all():
        raise ValueError("undistortion did not converge on the image border")
    x0, y0 = xy[:, 0].min(), xy[:, 1].min()
    x1, y1 = xy[:, 0].max(), xy[:, 1].max()

    normals = [
        np.array([0.0, 0.0, 1.0]),  # near: z >= near
        np.array([0.0, 0.0, -1.0]),  # far: z <= far
        np.array([1.0, 0.0, -x0]),  # left: x >= x0 * z
        np.array([-1.0, 0.0, x1]),  # right: x <= x1 * z
        np.array([0.0, 1.0, -y0]),  # top: y >= y0 * z
        np.array([0.0, -1.0, y1]),  # bottom: y <= y1 * z
    ]
    offsets = np.array([-camera.near, camera.far, 0.0, 0.0, 0.0, 0.0])
    norms = np.array([np.linalg.norm(n) for n in normals])
    return Frustum(np.stack(normals) / norms[:, None], offsets / norms)


def frustum_cull(frustum, box):
    """Keep unless all 8 corners lie outside one common plane (conservative)."""
    corners = box_corners(box)
    signed = corners @ frustum.normals.T + frustum.offsets
    return not np.any(np.all(signed < 0.0, axis=0))


def scale_camera(camera, width, height):
    """The same camera re-expressed at a different pixel resolution."""
    k = camera.intrinsics
    sx, sy = width / k.width, height / k.height
    return CameraFrame(
        Intrinsics(k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy, width, height),
        camera.distortion,
        camera.world_to_camera,
        camera.gravity_to_camera,
        camera.near,
        camera.far,
    )
