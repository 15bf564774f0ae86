import numpy as np
import pytest

from cubegt.camera import CameraFrame, Distortion, Intrinsics
from cubegt.geometry import Box3D, GravityBox


def random_rotation(rng):
    """Uniform random rotation via a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_box(rng, center_scale=2.0, dim_range=(0.2, 1.5), frame="world"):
    return Box3D(
        rng.uniform(-center_scale, center_scale, 3),
        rng.uniform(*dim_range, 3),
        random_rotation(rng),
        frame=frame,
    )


def random_gravity_box(rng, center_scale=2.0, dim_range=(0.2, 1.5)):
    return GravityBox(
        rng.uniform(-center_scale, center_scale, 3),
        rng.uniform(*dim_range, 3),
        rng.uniform(-np.pi, np.pi),
    )


def make_camera(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480,
                distortion=None, near=0.1, far=5.0, gravity=None, pose=None):
    from cubegt.geometry import RigidTransform

    return CameraFrame(
        Intrinsics(fx, fy, cx, cy, width, height),
        distortion if distortion is not None else Distortion(),
        pose if pose is not None else RigidTransform.identity(),
        gravity,
        near,
        far,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
