"""The deterministic transfer from one device's intrinsics to the other's.

Given intrinsics for the source view, the corner is recovered from the
source-view vertex images, every face match is lifted onto its face plane,
the target device is resected from the lifted points and its target-view
pixels, and the resected matrix is decomposed.  Running the chain forward
(camera to projector) and back again gives the cycle used by the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .c2 import LEGS, C2Model, VertexImages, check_convexity, solve_c2
from .errors import DegenerateConfiguration, NonPositiveDepth, RayParallelToPlane
from .geometry import (
    GeneralIntrinsics,
    Intrinsics,
    Pose,
    ProjectiveCamera,
    back_project_ray,
    decompose,
    resect_dlt,
)

FORWARD = "cam->proj"
BACKWARD = "proj->cam"
MIN_FACE_MATCHES = 4


def _frozen(a, shape_tail=(2,)) -> np.ndarray:
    a = np.array(a, dtype=float).reshape((-1,) + shape_tail)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FaceMatches:
    """Camera/projector pixel pairs partitioned by corner face.

    ``cam[S][i]`` and ``proj[S][i]`` are the two images of the i-th sample on
    face ``S``.  ``proj_vertices`` is derived once per dataset (see
    :mod:`c2calib.faces`) and anchors the backward transfer.
    """

    cam: dict
    proj: dict
    cam_vertices: VertexImages
    proj_vertices: VertexImages
    convexity: str

    def __post_init__(self):
        check_convexity(self.convexity)
        cam = {S: _frozen(self.cam.get(S, np.zeros((0, 2)))) for S in LEGS}
        proj = {S: _frozen(self.proj.get(S, np.zeros((0, 2)))) for S in LEGS}
        for S in LEGS:
            if cam[S].shape != proj[S].shape:
                raise ValueError(f"face {S}: camera and projector match counts differ")
        object.__setattr__(self, "cam", cam)
        object.__setattr__(self, "proj", proj)

    def counts(self) -> dict:
        return {S: len(self.cam[S]) for S in LEGS}

    def views(self, direction: str) -> tuple[dict, dict, VertexImages]:
        """``(source pixels, target pixels, source vertex images)``."""
        if direction == FORWARD:
            return self.cam, self.proj, self.cam_vertices
        if direction == BACKWARD:
            return self.proj, self.cam, self.proj_vertices
        raise ValueError(f"unknown direction {direction!r}")

    def swapped(self) -> FaceMatches:
        """Exchange the roles of the two views."""
        return FaceMatches(self.proj, self.cam, self.proj_vertices, self.cam_vertices, self.convexity)

    def downsample(self, rate: int) -> FaceMatches:
        """Keep every ``rate``-th match of each face."""
        if rate < 1:
            raise ValueError("downsampling rate must be >= 1")
        return replace(
            self,
            cam={S: self.cam[S][::rate] for S in LEGS},
            proj={S: self.proj[S][::rate] for S in LEGS},
        )


@dataclass(frozen=True, eq=False)
class TransferResult:
    K_target: GeneralIntrinsics
    pose: Pose
    """Maps source-frame points into the target frame."""
    c2: C2Model
    mean_reprojection: float
    camera: ProjectiveCamera


class CycleResult(NamedTuple):
    K_p: GeneralIntrinsics
    K_c_back: GeneralIntrinsics
    pp_c_back: tuple[float, float]


def intersect_face_points(c2: C2Model, K, face: str, images: np.ndarray) -> np.ndarray:
    """Lift image points of face ``face`` onto its plane.

    Raises
    ------
    RayParallelToPlane
        A viewing ray lies in the face plane, i.e. the face passes through
        the camera center.
    NonPositiveDepth
        An intersection lies behind the camera.
    """
    images = np.atleast_2d(np.asarray(images, dtype=float))
    rays = back_project_ray(K, images)
    n = c2.leg(face)
    denom = rays @ n
    tiny = 1e-12 * np.linalg.norm(n) * np.linalg.norm(rays, axis=1)
    if np.any(np.abs(denom) <= tiny):
        raise RayParallelToPlane(f"face {face} passes through the camera center")
    lam = (n @ c2.X_O) / denom
    if np.any(lam <= 0):
        raise NonPositiveDepth(f"face {face}: {int(np.sum(lam <= 0))} point(s) behind the camera")
    return lam[:, None] * rays


def transfer(K_source, matches: FaceMatches, direction: str = FORWARD) -> TransferResult:
    """Resect the target device given intrinsics of the source device."""
    if isinstance(K_source, GeneralIntrinsics):
        K_source = K_source.K
    src, tgt, vertices = matches.views(direction)
    for S in LEGS:
        if len(src[S]) < MIN_FACE_MATCHES:
            raise DegenerateConfiguration(
                f"face {S} has {len(src[S])} matches; at least {MIN_FACE_MATCHES} required"
            )
    c2 = solve_c2(K_source, vertices, matches.convexity)
    X = np.vstack([intersect_face_points(c2, K_source, S, src[S]) for S in LEGS])
    x = np.vstack([tgt[S] for S in LEGS])
    camera, reproj = resect_dlt(X, x)
    K_target, pose = decompose(camera)
    return TransferResult(K_target, pose, c2, reproj, camera)


def cycle_transfers(f_c: float, pp_c, matches: FaceMatches) -> tuple[TransferResult, TransferResult]:
    """Forward transfer from ``natural(f_c, pp_c)`` and the backward transfer.

    The backward pass starts from the naturalized projector intrinsics
    (mean focal length, projector PP, zero skew).
    """
    fwd = transfer(Intrinsics(f_c, tuple(pp_c)), matches, FORWARD)
    bwd = transfer(fwd.K_target.naturalized(), matches, BACKWARD)
    return fwd, bwd


def cycle(f_c: float, pp_c, matches: FaceMatches) -> CycleResult:
    fwd, bwd = cycle_transfers(f_c, pp_c, matches)
    return CycleResult(fwd.K_target, bwd.K_target, bwd.K_target.pp)
