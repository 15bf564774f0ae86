"""Oriented 3D box geometry: corners, rigid transforms, ray clipping and
gravity-aligned enclosing boxes.

Conventions used throughout the package:

* Rotations are 3x3 orthonormal matrices (det +1) mapping local/source
  coordinates into the parent/target frame. Euler angles are accepted only
  at I/O boundaries and composed as ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
* Box corners follow a fixed sign-bit order: corner ``i`` takes the local
  offset ``(sx*l/2, sy*w/2, sz*h/2)`` where ``sx`` is + when bit 0 of ``i``
  is set, ``sy`` bit 1, ``sz`` bit 2 (bit clear means -). Corner 0 is the
  all-negative corner, corner 7 the all-positive one.
* The gravity-aligned frame has +z antiparallel to gravity (z up).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ROTATION_TOL = 1e-6
MIN_EXTENT = 1e-4  # floor for degenerate cut-box dimensions, meters

# Sign-bit corner order: bit0 -> x, bit1 -> y, bit2 -> z; set bit = positive.
CORNER_SIGNS = np.array(
    [[1.0 if i & (1 << b) else -1.0 for b in range(3)] for i in range(8)]
)

BOX_FRAMES = ("world", "camera", "gravity")


def _as_float_array(value, shape, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_rotation(rotation, tol=ROTATION_TOL, name="rotation"):
    """Validate a 3x3 orthonormal matrix with determinant +1."""
    r = _as_float_array(rotation, (3, 3), name)
    if not np.allclose(r @ r.T, np.eye(3), atol=tol):
        raise ValueError(f"{name} is not orthonormal within {tol}")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError(f"{name} determinant is not +1 within {tol}")
    return r


def rotation_about_z(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_euler(pitch, roll, yaw):
    """Rz(yaw) @ Ry(pitch) @ Rx(roll), the package's single Euler convention."""
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rotation_about_z(yaw) @ ry @ rx


def wrap_angle(angle):
    """Normalize an angle to [-pi, pi); exact no-op for in-range values."""
    if -math.pi <= angle < math.pi:
        return angle
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class RigidTransform:
    """Rotation followed by translation: p' = R @ p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        object.__setattr__(
            self, "translation", _as_float_array(self.translation, (3,), "translation")
        )

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix):
        """Build from a 4x4 homogeneous matrix."""
        m = _as_float_array(matrix, (4, 4), "matrix")
        return cls(m[:3, :3], m[:3, 3])

    def to_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        """Transform one point (3,) or a batch (N, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other):
        """self after other: (self.compose(other)).apply(p) == self.apply(other.apply(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self):
        return RigidTransform(self.rotation.T, -(self.rotation.T @ self.translation))


@dataclass(frozen=True)
class Box3D:
    """9-DOF oriented box: center, dims (length, width, height), full rotation.

    ``rotation`` maps box-local coordinates into the parent frame named by
    ``frame``.
    """

    center: np.ndarray
    dims: np.ndarray
    rotation: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        object.__setattr__(self, "center", _as_float_array(self.center, (3,), "center"))
        dims = _as_float_array(self.dims, (3,), "dims")
        if np.any(dims <= 0.0):
            raise ValueError(f"dims must be strictly positive, got {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        if self.frame not in BOX_FRAMES:
            raise ValueError(f"frame must be one of {BOX_FRAMES}, got {self.frame!r}")


@dataclass(frozen=True)
class GravityBox:
    """7-DOF gravity-aligned box: yaw-only rotation about the (z up) gravity axis.

    Yaw is normalized to [-pi, pi) on construction.
    """

    center: np.ndarray
    dims: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", _as_float_array(self.center, (3,), "center"))
        dims = _as_float_array(self.dims, (3,), "dims")
        if np.any(dims <= 0.0):
            raise ValueError(f"dims must be strictly positive, got {dims}")
        object.__setattr__(self, "dims", dims)
        if not math.isfinite(self.yaw):
            raise ValueError("yaw must be finite")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    def to_box3d(self, frame="gravity"):
        return Box3D(self.center, self.dims, rotation_about_z(self.yaw), frame=frame)


def _trusted_box(center, dims, rotation, frame):
    """Internal Box3D constructor for values valid by construction (rotation
    products, clamped extents); skips __post_init__ revalidation."""
    box = object.__new__(Box3D)
    object.__setattr__(box, "center", center)
    object.__setattr__(box, "dims", dims)
    object.__setattr__(box, "rotation", rotation)
    object.__setattr__(box, "frame", frame)
    return box


def box_corners(box):
    """The 8 corners of a Box3D or GravityBox, (8, 3), in sign-bit order."""
    if isinstance(box, GravityBox):
        rotation = rotation_about_z(box.yaw)
    else:
        rotation = box.rotation
    offsets = CORNER_SIGNS * (box.dims * 0.5)
    return box.center + offsets @ rotation.T


def transform_box(box, rt, frame=None):
    """Apply a rigid transform to a box; dims are unchanged."""
    return _trusted_box(
        rt.rotation @ box.center + rt.translation,
        box.dims,
        rt.rotation @ box.rotation,
        box.frame if frame is None else frame,
    )


def box_volume(box):
    return float(np.prod(box.dims))


def _hull_chain(points):
    """Monotone-chain hull over float tuples, counter-clockwise.

    Works in plain Python: every caller hands it a handful of points (box
    corners, footprints), where numpy per-element dispatch would dominate.
    """
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def half_hull(seq):
        hull = []
        for p in seq:
            while len(hull) >= 2:
                a, b = hull[-2], hull[-1]
                if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) <= 0.0:
                    hull.pop()
                else:
                    break
            hull.append(p)
        return hull

    lower = half_hull(pts)
    upper = half_hull(reversed(pts))
    return lower[:-1] + upper[:-1]


def convex_hull_2d(points):
    """Convex hull of 2D points by monotone chain, counter-clockwise, (H, 2).

    Collinear points on the hull boundary are dropped. Degenerate inputs
    (all points collinear) return a hull with fewer than 3 vertices.
    """
    pts = np.asarray(points, dtype=np.float64)
    return np.array(_hull_chain([(float(x), float(y)) for x, y in pts])).reshape(-1, 2)


def min_area_rect(points):
    """Minimum-area rectangle enclosing 2D points.

    Returns (center (2,), extents (2,), angle). The rectangle has one side
    parallel to a convex-hull edge (rotating calipers over hull edges, which
    is exact for point sets). Raises ValueError on a degenerate (zero-area)
    point set.
    """
    pts = np.asarray(points, dtype=np.float64)
    hull = _hull_chain([(float(x), float(y)) for x, y in pts])
    if len(hull) < 3:
        raise ValueError("degenerate footprint: points are collinear")

    best = None
    n = len(hull)
    for i in range(n):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % n]
        angle = math.atan2(by - ay, bx - ax)
        c, s = math.cos(angle), math.sin(angle)
        x0 = x1 = hull[0][0] * c + hull[0][1] * s
        y0 = y1 = -hull[0][0] * s + hull[0][1] * c
        for px, py in hull:
            x = px * c + py * s
            y = -px * s + py * c
            if x < x0: x0 = x
            if x > x1: x1 = x
            if y < y0: y0 = y
            if y > y1: y1 = y
        area = (x1 - x0) * (y1 - y0)
        if best is None or area < best[0]:
            best = (area, angle, x0, x1, y0, y1)

    area, angle, x0, x1, y0, y1 = best
    if area <= 0.0:
        raise ValueError("degenerate footprint: zero-area hull")
    cx_r, cy_r = (x0 + x1) * 0.5, (y0 + y1) * 0.5
    c, s = math.cos(angle), math.sin(angle)
    center = np.array([cx_r * c - cy_r * s, cx_r * s + cy_r * c])
    return center, np.array([x1 - x0, y1 - y0]), angle


def enclosing_gravity_box(box, gravity_rotation):
    """Smallest yaw-only box containing all corners of ``box``.

    ``gravity_rotation`` maps coordinates of the frame the box lives in into
    the gravity-aligned frame (z up). The horizontal footprint is the
    minimum-area rectangle of the projected corners; height comes from the
    z extents. The result is expressed in the gravity-aligned frame and
    canonicalized to yaw in [-pi/4, pi/4) (a rectangle is invariant under a
    quarter turn plus an extent swap), so equal-area caliper ties cannot
    flip the representation.
    """
    rot = check_rotation(gravity_rotation, name="gravity_rotation")
    corners = box_corners(box) @ rot.T
    center_xy, extents, angle = min_area_rect(corners[:, :2])
    z0, z1 = corners[:, 2].min(), corners[:, 2].max()
    height = z1 - z0
    if height <= 0.0:
        raise ValueError("degenerate footprint: zero vertical extent")

    quarter = math.pi / 2.0
    turns = math.floor((angle + math.pi / 4.0) / quarter)
    yaw = angle - turns * quarter
    length, width = (extents[1], extents[0]) if turns % 2 else (extents[0], extents[1])

    center = np.array([center_xy[0], center_xy[1], (z0 + z1) * 0.5])
    return GravityBox(center, np.array([length, width, height]), yaw)


def ray_box_segment(origin, direction, box, unit_tol=1e-9):
    """Slab-method ray/box intersection.

    Returns ``(t_near, t_far)`` with ``0 <= t_near <= t_far`` (entry clamped
    to the ray origin), or None when the forward ray misses the box.
    ``direction`` must be unit length within ``unit_tol``.
    """
    origin = _as_float_array(origin, (3,), "origin")
    direction = _as_float_array(direction, (3,), "direction")
    norm = np.linalg.norm(direction)
    if abs(norm - 1.0) > unit_tol:
        raise ValueError(f"direction must be unit length, |d| = {norm}")

    local_o = box.rotation.T @ (origin - box.center)
    local_d = box.rotation.T @ direction
    half = box.dims * 0.5

    t0, t1 = -math.inf, math.inf
    for axis in range(3):
        d, o, h = local_d[axis], local_o[axis], half[axis]
        if abs(d) < 1e-15:
            if abs(o) > h:
                return None
            continue
        ta = (-h - o) / d
        tb = (h - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if t1 < t0 or t1 < 0.0:
        return None
    return max(t0, 0.0), t1


def ray_box_intervals(dirs, box, t_lo, t_hi):
    """Vectorized slab clipping of origin-anchored rays against one box.

    ``dirs`` is (N, 3) (need not be unit length; the returned parameters are
    in units of each ray's own direction vector). Each ray i is clipped to
    [t_lo[i], t_hi[i]] before intersecting. Returns (t0, t1, hit) arrays.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    local_d = dirs @ box.rotation
    local_o = -(box.center @ box.rotation)
    half = box.dims * 0.5

    t0 = np.asarray(t_lo, dtype=np.float64) * np.ones(len(dirs))
    t1 = np.asarray(t_hi, dtype=np.float64) * np.ones(len(dirs))
    for axis in range(3):
        d = local_d[:, axis]
        o, h = local_o[axis], half[axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-h - o) / d
            tb = (h - o) / d
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        parallel = np.abs(d) < 1e-15
        inside = np.abs(o) <= h
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
        t0 = np.maximum(t0, lo)
        t1 = np.minimum(t1, hi)
    return t0, t1, t0 <= t1
