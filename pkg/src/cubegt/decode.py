"""Decode raw detector outputs (projected center, depth, dimensions, yaw)
into metric gravity-aligned boxes, including the affine depth rescale used
when a metric depth map accompanies the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import backproject
from .geometry import GravityBox, _as_float_array

SIGMA_FLOOR = 1e-3  # meters; guards constant depth maps


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel z-depth in meters; 0 marks an invalid sample."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"depth map must be 2D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
            raise ValueError("depth values must be finite and >= 0")
        object.__setattr__(self, "values", vals)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def valid_mask(self):
        return self.values > 0.0


@dataclass(frozen=True)
class DepthStats:
    """Affine statistics of a depth map's valid samples."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < SIGMA_FLOOR:
            object.__setattr__(self, "sigma", SIGMA_FLOOR)


@dataclass(frozen=True)
class RawPrediction:
    """One raw detector output before metric decoding.

    In RGB-D mode z and dims are in affine-normalized depth units; in RGB
    mode they are already meters.
    """

    u: float
    v: float
    z: float
    dims: np.ndarray
    yaw: float
    score: float

    def __post_init__(self):
        dims = _as_float_array(self.dims, (3,), "dims")
        if np.any(dims <= 0.0):
            raise ValueError(f"dims must be strictly positive, got {dims}")
        object.__setattr__(self, "dims", dims)
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        for name in ("u", "v", "z", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def depth_stats(depth):
    """Mean and population standard deviation over valid (> 0) samples."""
    valid = depth.values[depth.values > 0.0]
    if valid.size < 2:
        raise ValueError(f"need at least 2 valid depth samples, got {valid.size}")
    mu = float(valid.mean())
    sigma = float(np.sqrt(np.mean((valid - mu) ** 2)))
    return DepthStats(mu, sigma)


def decode(pred, camera, stats=None):
    """Turn one raw prediction into a gravity-aligned metric box.

    With ``stats`` (RGB-D mode) the depth and dimensions are rescaled as
    z' = sigma * z + mu and dims' = sigma * dims; without, they pass through
    as meters. The center is backprojected through the camera at z' and the
    box is expressed in the camera's gravity-aligned frame. Returns None for
    a rejected prediction (non-positive rescaled depth).
    """
    cam_to_gravity = camera.camera_to_gravity()
    if stats is not None:
        z = stats.sigma * pred.z + stats.mu
        dims = stats.sigma * pred.dims
    else:
        z = pred.z
        dims = pred.dims
    if z <= 0.0:
        return None
    center_cam = backproject(camera, pred.u, pred.v, z)
    return GravityBox(cam_to_gravity @ center_cam, dims, pred.yaw)
