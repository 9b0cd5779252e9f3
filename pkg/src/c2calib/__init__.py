"""Self-calibration of a camera-projector pair from one view of a cuboid corner."""

from .c2 import CONCAVE, CONVEX, C2Model, VertexImages, solve_c2, solve_c2_all
from .calibration import calibrate, finalize_calibration
from .errors import C2CalibError, GeometryError, InputError, OptimizationError
from .geometry import GeneralIntrinsics, Intrinsics, Pose, ProjectiveCamera
from .objective import (
    TABLE2_CONFIGS,
    ObjectiveConfig,
    ObjectiveCurve,
    bounded_minimize,
    evaluate_objective,
    grid_search,
    minimize_objective,
)
from .report import CalibrationReport
from .synthetic import SceneSpec, generate_scene, random_scene_spec
from .transfer import FaceMatches, cycle, transfer

__all__ = [
    "CONCAVE", "CONVEX", "C2Model", "VertexImages", "solve_c2", "solve_c2_all",
    "calibrate", "finalize_calibration",
    "C2CalibError", "GeometryError", "InputError", "OptimizationError",
    "GeneralIntrinsics", "Intrinsics", "Pose", "ProjectiveCamera",
    "TABLE2_CONFIGS", "ObjectiveConfig", "ObjectiveCurve", "bounded_minimize",
    "evaluate_objective", "grid_search", "minimize_objective",
    "CalibrationReport", "SceneSpec", "generate_scene", "random_scene_spec",
    "FaceMatches", "cycle", "transfer",
]
