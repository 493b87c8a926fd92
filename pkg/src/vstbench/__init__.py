"""Synthetic benchmarking toolkit for video see-through passthrough modes."""

from .geometry import (
    CameraIntrinsics,
    GeometryError,
    Homography,
    Pose,
    RigCalibration,
    Viewpoint,
    default_rig,
    load_rig,
    plane_homography,
    project,
    reproject_pixel,
    save_rig,
    unproject,
)
from .depth import (
    DepthCorruptionSpec,
    DepthMap,
    SmoothingSpec,
    corrupt_depth,
    smooth_depth,
    warp_depth_left_to_right,
)
from .scene import (
    FiducialTarget,
    RenderedFrame,
    Scene,
    TexturedPatch,
    animate_rig,
    benchmark_suite,
    default_trajectory,
    load_scene,
    raycast_depth,
    render,
    save_scene,
)
from .passthrough import (
    PlaneSpec,
    SynthesizedView,
    WarpField,
    dp_reproject,
    gap_reproject,
)

__version__ = "0.1.0"
