"""Calibration results and their JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .c2 import C2Model
from .geometry import GeneralIntrinsics, Intrinsics, Pose

REPORT_VERSION = 1


def signed_percent(est: float, gt: float) -> float:
    """``100 (est - gt) / gt``."""
    return 100.0 * (est - gt) / gt


def intrinsic_errors(camera: Intrinsics, projector: Intrinsics,
                     camera_gt: Intrinsics, projector_gt: Intrinsics) -> dict:
    """Signed percent errors of ``f_c, f_p, x_p0, y_p0`` and their mean absolute value."""
    err = {
        "f_c": signed_percent(camera.f, camera_gt.f),
        "f_p": signed_percent(projector.f, projector_gt.f),
        "x_p0": signed_percent(projector.pp[0], projector_gt.pp[0]),
        "y_p0": signed_percent(projector.pp[1], projector_gt.pp[1]),
    }
    err["MAE"] = float(np.mean([abs(v) for v in err.values()]))
    return err


def pose_to_dict(pose: Pose) -> dict:
    q = Rotation.from_matrix(pose.R).as_quat()  # x, y, z, w
    return {"quaternion_xyzw": q.tolist(), "R": pose.R.tolist(), "t": pose.t.tolist()}


def pose_from_dict(d: dict) -> Pose:
    # the matrix is kept alongside the quaternion so reloading is exact
    R = d["R"] if "R" in d else Rotation.from_quat(d["quaternion_xyzw"]).as_matrix()
    return Pose(R, d["t"])


@dataclass(frozen=True, eq=False)
class CalibrationReport:
    """Everything estimated for one camera-projector pair.

    ``pose`` maps camera-frame points into the projector frame.  Scene
    quantities (translation, corner) use the gauge in which the right-angle
    vertex lies at unit depth scalar along its camera ray.
    """

    camera: Intrinsics
    projector: Intrinsics
    """Naturalised projector intrinsics (mean focal length, zero skew)."""
    projector_full: GeneralIntrinsics
    pose: Pose
    c2: C2Model
    objective: float
    terms: tuple[float, ...]
    objective_config: dict = field(default_factory=dict)
    reprojection: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()
    mode: str = "camera-projector"
    curve_path: str | None = None
    quality: dict = field(default_factory=dict)
    errors: dict | None = None
    """Signed percent errors against ground truth, when known."""

    @classmethod
    def from_truth(cls, truth) -> CalibrationReport:
        """Report holding a simulated scene's true calibration, in the report gauge."""
        s = 1.0 / truth.c2.X_O[2]
        return cls(
            camera=truth.camera,
            projector=truth.projector,
            projector_full=truth.projector.to_general(),
            pose=Pose(truth.pose.R, s * truth.pose.t),
            c2=truth.c2.scaled(s),
            objective=0.0,
            terms=(0.0,) * 7,
            mode="ground truth",
        )

    def with_ground_truth(self, camera_gt: Intrinsics, projector_gt: Intrinsics) -> CalibrationReport:
        return replace(self, errors=intrinsic_errors(self.camera, self.projector, camera_gt, projector_gt))

    def replace(self, **kw) -> CalibrationReport:
        return replace(self, **kw)

    @property
    def mae(self) -> float:
        return math.nan if self.errors is None else self.errors["MAE"]

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "mode": self.mode,
            "camera": self.camera.to_dict(),
            "projector": self.projector.to_dict(),
            "projector_full": self.projector_full.to_dict(),
            "pose": pose_to_dict(self.pose),
            "c2": self.c2.to_dict(),
            "objective": {
                "E": self.objective,
                "terms": list(self.terms),
                "config": self.objective_config,
                "curve_path": self.curve_path,
            },
            "reprojection": self.reprojection,
            "flags": list(self.flags),
            "quality": self.quality,
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationReport:
        if d.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {d.get('version')!r}")
        obj = d["objective"]
        return cls(
            camera=Intrinsics.from_dict(d["camera"]),
            projector=Intrinsics.from_dict(d["projector"]),
            projector_full=GeneralIntrinsics.from_dict(d["projector_full"]),
            pose=pose_from_dict(d["pose"]),
            c2=C2Model.from_dict(d["c2"]),
            objective=obj["E"],
            terms=tuple(obj["terms"]),
            objective_config=obj.get("config", {}),
            reprojection=d.get("reprojection", {}),
            flags=tuple(d.get("flags", ())),
            mode=d.get("mode", "camera-projector"),
            curve_path=obj.get("curve_path"),
            quality=d.get("quality", {}),
            errors=d.get("errors"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> CalibrationReport:
        return cls.from_dict(json.loads(text))
