"""cubegt: pixel-accurate per-frame ground truth from world-space oriented
3D box annotations, plus oriented-IoU detection evaluation."""

from ._kernels import BACKEND_NAME as raster_backend
from .assignment import greedy_match, hungarian
from .camera import (
    CameraFrame,
    Distortion,
    Frustum,
    Intrinsics,
    backproject,
    build_frustum,
    frustum_cull,
    project,
    undistort,
)
from .decode import DepthMap, DepthStats, RawPrediction, decode, depth_stats
from .evaluation import Detection, EvalConfig, EvalReport, ap_from_pr, bucket_of, evaluate
from .geometry import (
    Box3D,
    GravityBox,
    RigidTransform,
    box_corners,
    box_volume,
    enclosing_gravity_box,
    ray_box_segment,
    rotation_from_euler,
    transform_box,
)
from .metrics3d import chamfer_corner_distance, convex_clip, iou_gravity, iou_monte_carlo
from .pipeline import (
    FrameGroundTruth,
    GroundTruthInstance,
    PipelineParams,
    SceneAnnotations,
    cut_box_to_points,
    render_frame_gt,
)
from .raster import InstanceRender, composite_visibility, rasterize_box, tessellate_box

__version__ = "0.1.0"
