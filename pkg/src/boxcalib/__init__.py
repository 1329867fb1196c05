"""Infrastructure-to-vehicle LiDAR extrinsic calibration from 3D detection boxes."""

from ._accel import backend_name
from .affinity import (
    AffinityMatrix,
    EdgeAffinity,
    Scene,
    angle_affinity,
    build_affinity,
    core_affinity,
    fuse_affinity,
    hypothesis_extrinsics,
    length_affinity,
    overall_iou,
    overall_iou_under,
)
from .config import PRESETS, RefinementParams, StrategyConfig
from .errors import *  # noqa: F401,F403
from .evaluation import (
    BenchmarkReport,
    FramePairRecord,
    classify_difficulty,
    rre,
    rte,
    run_benchmark,
    success,
)
from .extrinsics import estimate_extrinsic, refine, resolve_correspondence, svd_fit
from .geometry import (
    Box3D,
    OrientedBox,
    RigidTransform,
    apply_transform,
    box_vertices,
    compose,
    inverse,
    iou_3d,
)
from .matching import MatchSet, filter_matches, solve_assignment
from .pipeline import CalibrationResult, calibrate, monitor_oiou
from .synth import SynthParams, synth_scene_pair

__version__ = "0.1.0"
