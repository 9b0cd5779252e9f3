"""Ground-truth camera-projector scenes observing a cuboid corner.

:func:`generate_scene` turns a :class:`SceneSpec` into face matches and the
full ground truth; :func:`random_scene_spec` draws well-posed specs
deterministically from a seed.  Everything downstream (tests, benchmark
tables, demos) uses these as the oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .c2 import CONCAVE, CONVEX, LEGS, C2Model, VertexImages, check_convexity
from .errors import VisibilityFailure
from .geometry import Intrinsics, Pose, compose, project

REFERENCE_CAMERA = Intrinsics(1791.1, (1256.3, 1054.3))
REFERENCE_PROJECTOR = Intrinsics(1247.3, (377.1, 234.0))
REFERENCE_CAMERA_SIZE = (2448, 2048)
REFERENCE_PROJECTOR_SIZE = (854, 480)

# faces are the triangles spanned by O and the two far vertices other than S
FACE_CORNERS = {"A": ("B", "C"), "B": ("C", "A"), "C": ("A", "B")}
IMAGE_MARGIN = 5.0


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Everything needed to synthesize one camera-projector observation.

    ``c2_rotation`` has the unit leg directions as columns (camera frame);
    ``projector_pose`` maps camera-frame points into the projector frame.
    ``occlusion`` is the fraction of each face triangle hidden around its
    vertices and edges, leaving a central sub-triangle.  Samples are drawn
    from the part of that sub-triangle inside both images.
    """

    camera: Intrinsics = REFERENCE_CAMERA
    camera_size: tuple[int, int] = REFERENCE_CAMERA_SIZE
    projector: Intrinsics = REFERENCE_PROJECTOR
    projector_size: tuple[int, int] = REFERENCE_PROJECTOR_SIZE
    projector_pose: Pose = field(default_factory=Pose.identity)
    c2_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    c2_origin: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 3.0]))
    leg_lengths: tuple[float, float, float] = (0.6, 0.6, 0.6)
    convexity: str = CONCAVE
    samples_per_face: int = 500
    occlusion: float = 0.0
    sigma: float = 0.0
    symmetric_noise: bool = False
    seed: int = 0

    def __post_init__(self):
        check_convexity(self.convexity)
        if not 0.0 <= self.occlusion < 1.0:
            raise ValueError("occlusion must lie in [0, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.samples_per_face < 4:
            raise ValueError("need at least 4 samples per face")
        object.__setattr__(self, "c2_rotation", np.array(self.c2_rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "c2_origin", np.array(self.c2_origin, dtype=float).reshape(3))
        object.__setattr__(self, "leg_lengths", tuple(float(v) for v in self.leg_lengths))

    def c2_model(self) -> C2Model:
        legs = self.c2_rotation * np.asarray(self.leg_lengths)
        X = [self.c2_origin] + [self.c2_origin + legs[:, i] for i in range(3)]
        return C2Model(*X, convexity=self.convexity)

    def replace(self, **kw) -> SceneSpec:
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "camera": self.camera.to_dict(),
            "camera_size": list(self.camera_size),
            "projector": self.projector.to_dict(),
            "projector_size": list(self.projector_size),
            "projector_pose": {"R": self.projector_pose.R.tolist(), "t": self.projector_pose.t.tolist()},
            "c2_rotation": self.c2_rotation.tolist(),
            "c2_origin": self.c2_origin.tolist(),
            "leg_lengths": list(self.leg_lengths),
            "convexity": self.convexity,
            "samples_per_face": self.samples_per_face,
            "occlusion": self.occlusion,
            "sigma": self.sigma,
            "symmetric_noise": self.symmetric_noise,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        d = dict(d)
        kw = {}
        if "camera" in d:
            kw["camera"] = Intrinsics.from_dict(d.pop("camera"))
        if "projector" in d:
            kw["projector"] = Intrinsics.from_dict(d.pop("projector"))
        if "projector_pose" in d:
            p = d.pop("projector_pose")
            kw["projector_pose"] = Pose(p["R"], p["t"])
        for key in ("camera_size", "projector_size", "leg_lengths"):
            if key in d:
                kw[key] = tuple(d.pop(key))
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scene spec fields: {sorted(unknown)}")
        kw.update(d)
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    camera: Intrinsics
    projector: Intrinsics
    pose: Pose
    c2: C2Model
    cam_vertices: VertexImages
    proj_vertices: VertexImages
    points: dict
    """Per-face 3D sample points (camera frame, scene units)."""
    camera_size: tuple[int, int]
    projector_size: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "camera": self.camera.to_dict(),
            "projector": self.projector.to_dict(),
            "pose": {"R": self.pose.R.tolist(), "t": self.pose.t.tolist()},
            "c2": self.c2.to_dict(),
            "cam_vertices": self.cam_vertices.to_dict(),
            "proj_vertices": self.proj_vertices.to_dict(),
            "camera_size": list(self.camera_size),
            "projector_size": list(self.projector_size),
        }


@dataclass(frozen=True, eq=False)
class Scene:
    """Raw per-face correspondences plus ground truth."""

    cam: dict
    proj: dict
    truth: GroundTruth
    spec: SceneSpec

    @property
    def pp_c(self) -> tuple[float, float]:
        return self.truth.camera.pp

    def far_vertex_hints(self) -> dict:
        return {S: self.truth.cam_vertices[S].copy() for S in LEGS}

    def face_matches(self, infer: bool = False, **kw):
        """Assemble :class:`~c2calib.transfer.FaceMatches`.

        ``infer=False`` uses the true camera-view vertex images; ``infer=True``
        runs leg/RA inference from the face homographies with the true far
        vertices as hints.  Projector-view vertices always come from the
        homographies.
        """
        from .faces import build_face_matches

        if infer:
            matches, _ = build_face_matches(
                self.cam, self.proj, self.spec.convexity, hints=self.far_vertex_hints(), **kw
            )
        else:
            matches, _ = build_face_matches(
                self.cam, self.proj, self.spec.convexity, cam_vertices=self.truth.cam_vertices, **kw
            )
        return matches


def _in_image(x: np.ndarray, size, margin: float = 0.0) -> np.ndarray:
    return (
        (x[:, 0] >= margin) & (x[:, 0] <= size[0] - margin)
        & (x[:, 1] >= margin) & (x[:, 1] <= size[1] - margin)
    )


def _sample_triangle(rng: np.random.Generator, P: np.ndarray, n: int) -> np.ndarray:
    u = rng.random((n, 2))
    flip = u.sum(axis=1) > 1
    u[flip] = 1 - u[flip]
    return P[0] + u[:, :1] * (P[1] - P[0]) + u[:, 1:] * (P[2] - P[0])


def visible_triangle(c2: C2Model, face: str, occlusion: float) -> np.ndarray:
    """Corners of the unoccluded central sub-triangle of face ``face``."""
    O = c2.X_O
    P1 = getattr(c2, "X_" + FACE_CORNERS[face][0])
    P2 = getattr(c2, "X_" + FACE_CORNERS[face][1])
    # barycentric margin delta leaves (1 - 3 delta)^2 = 1 - occlusion of the area
    delta = (1.0 - np.sqrt(1.0 - occlusion)) / 3.0
    hi, lo = 1 - 2 * delta, delta
    tri = np.array([O, P1, P2])
    W = np.array([[hi, lo, lo], [lo, hi, lo], [lo, lo, hi]])
    return W @ tri


def _visible_mask(X: np.ndarray, M_c, M_p, spec: SceneSpec, margin: float = IMAGE_MARGIN) -> np.ndarray:
    ok = (M_c.depth(X) > 0) & (M_p.depth(X) > 0)
    ok[ok] &= _in_image(project(M_c, X[ok]), spec.camera_size, margin)
    ok[ok] &= _in_image(project(M_p, X[ok]), spec.projector_size, margin)
    return ok


def sample_face(rng: np.random.Generator, spec: SceneSpec, face: str, n: int,
                batch: int | None = None, max_batches: int = 200) -> np.ndarray:
    """``n`` uniform samples of the unoccluded part of ``face`` seen by both devices.

    Faces may extend past either image; only the shared field of view is
    sampled, by rejection.
    """
    c2 = spec.c2_model()
    M_c = compose(spec.camera)
    M_p = compose(spec.projector, spec.projector_pose)
    tri = visible_triangle(c2, face, spec.occlusion)
    batch = batch or max(4 * n, 1000)
    kept, total = [], 0
    for _ in range(max_batches):
        X = _sample_triangle(rng, tri, batch)
        X = X[_visible_mask(X, M_c, M_p, spec)]
        kept.append(X)
        total += len(X)
        if total >= n:
            return np.vstack(kept)[:n]
    raise VisibilityFailure(
        f"face {face}: only {total} of {max_batches * batch} samples are visible to both devices"
    )


def _add_noise(rng: np.random.Generator, x: np.ndarray, sigma: float, size) -> np.ndarray:
    """Gaussian pixel noise, redrawn for the rare samples pushed off the image."""
    noisy = x + rng.normal(0.0, sigma, x.shape)
    for _ in range(100):
        out = ~_in_image(noisy, size)
        if not out.any():
            break
        noisy[out] = x[out] + rng.normal(0.0, sigma, (int(out.sum()), 2))
    return noisy


def generate_scene(spec: SceneSpec) -> Scene:
    """Sample faces, project into both devices and add projector noise.

    Raises
    ------
    VisibilityFailure
        A corner vertex lies behind a device or a face has (almost) no
        region visible to both devices.
    """
    c2 = spec.c2_model()
    M_c = compose(spec.camera)
    M_p = compose(spec.projector, spec.projector_pose)
    try:
        vc = project(M_c, c2.vertices)
        vp = project(M_p, c2.vertices)
    except Exception as exc:
        raise VisibilityFailure(f"corner vertex behind a device: {exc}") from exc
    rng = np.random.default_rng(spec.seed)
    cam, proj, points = {}, {}, {}
    for S in LEGS:
        X = sample_face(rng, spec, S, spec.samples_per_face)
        points[S] = X
        cam[S] = project(M_c, X)
        proj[S] = project(M_p, X)
    if spec.sigma > 0:
        for S in LEGS:
            proj[S] = _add_noise(rng, proj[S], spec.sigma, spec.projector_size)
            if spec.symmetric_noise:
                cam[S] = _add_noise(rng, cam[S], spec.sigma, spec.camera_size)
    truth = GroundTruth(
        camera=spec.camera,
        projector=spec.projector,
        pose=spec.projector_pose,
        c2=c2,
        cam_vertices=VertexImages.from_array(vc),
        proj_vertices=VertexImages.from_array(vp),
        points=points,
        camera_size=tuple(spec.camera_size),
        projector_size=tuple(spec.projector_size),
    )
    return Scene(cam, proj, truth, spec)


def look_at(center: np.ndarray, target: np.ndarray, roll: float = 0.0) -> Pose:
    """Pose of a device at ``center`` whose optical axis passes through ``target``."""
    z = target - center
    z = z / np.linalg.norm(z)
    x = np.cross(z, [0.0, -1.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = Rotation.from_rotvec([0.0, 0.0, roll]).as_matrix() @ np.stack([x, y, z])
    return Pose(R, -R @ center)


def _align(u: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Smallest rotation taking unit vector ``u`` onto unit vector ``target``."""
    rot, _ = Rotation.align_vectors(target[None], u[None])
    return rot.as_matrix()


def corner_rotation(rng: np.random.Generator, view_dir: np.ndarray, convexity: str,
                    min_component: float = 0.3) -> np.ndarray:
    """Random leg frame seeing the camera from inside (concave) or outside (convex).

    ``view_dir`` is the unit direction from the corner vertex to the camera.
    The returned rotation maps a direction ``u`` with all components at least
    ``min_component`` onto ``view_dir`` (or its negative for a convex corner),
    followed by a random roll about ``view_dir``.
    """
    while True:
        u = rng.uniform(min_component, 1.0, 3)
        u /= np.linalg.norm(u)
        if u.min() >= min_component:
            break
    target = view_dir if convexity == CONCAVE else -view_dir
    R = _align(u, target)
    roll = Rotation.from_rotvec(rng.uniform(-np.pi, np.pi) * target).as_matrix()
    return roll @ R


def random_scene_spec(seed: int, *, convexity: str | None = None, sigma: float = 0.0,
                      samples_per_face: int = 500, occlusion: float = 0.0,
                      camera: Intrinsics = REFERENCE_CAMERA, camera_size=REFERENCE_CAMERA_SIZE,
                      projector: Intrinsics = REFERENCE_PROJECTOR, projector_size=REFERENCE_PROJECTOR_SIZE,
                      baseline: tuple[float, float] = (0.25, 0.5),
                      leg_range: tuple[float, float] = (0.5, 1.0),
                      min_coverage: float = 0.05, max_tries: int = 2000) -> SceneSpec:
    """Draw a visible, well-posed scene deterministically from ``seed``.

    The corner is centred 2.5-4 scene units in front of the camera with legs
    of ``leg_range`` times that distance, so its faces typically overflow the
    projector's field of view the way a room corner does.  Both devices see
    every face from the front, and at least ``min_coverage`` of each
    unoccluded face is visible to both.
    """
    rng = np.random.default_rng([seed, 7919])
    if convexity is None:
        convexity = CONCAVE if rng.random() < 0.5 else CONVEX
    for _ in range(max_tries):
        D = rng.uniform(2.5, 4.0)
        b = rng.uniform(*baseline)
        phi = rng.uniform(-0.4, 0.4)
        c_p = np.array([b * np.cos(phi), b * np.sin(phi), rng.uniform(-0.05, 0.05)])
        target = D * np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 1.0])
        aim = target + rng.normal(0.0, 0.03 * D, 3)
        pose = look_at(c_p, aim, roll=rng.uniform(-0.1, 0.1))
        R = corner_rotation(rng, -target / np.linalg.norm(target), convexity)
        legs = rng.uniform(*leg_range, 3) * D
        X_O = target - (R * legs).sum(axis=1) / 4.0
        spec = SceneSpec(
            camera=camera, camera_size=tuple(camera_size), projector=projector,
            projector_size=tuple(projector_size), projector_pose=pose, c2_rotation=R,
            c2_origin=X_O, leg_lengths=tuple(legs), convexity=convexity,
            samples_per_face=samples_per_face, occlusion=occlusion, sigma=sigma,
            seed=int(rng.integers(2**31)),
        )
        if _is_visible(spec, min_coverage):
            return spec
    raise VisibilityFailure(f"no visible scene found for seed {seed}")


def _is_visible(spec: SceneSpec, min_coverage: float, n_probe: int = 2000) -> bool:
    c2 = spec.c2_model()
    M_c = compose(spec.camera)
    M_p = compose(spec.projector, spec.projector_pose)
    for M in (M_c, M_p):
        if np.any(M.depth(c2.vertices) <= 0.05 * np.linalg.norm(c2.X_O)):
            return False
    vc = project(M_c, c2.vertices)
    if np.min(np.linalg.norm(vc[1:] - vc[0], axis=1)) < 40.0:
        return False
    # both devices must see every face from the side the label says
    want = 1.0 if spec.convexity == CONCAVE else -1.0
    for center in (np.zeros(3), spec.projector_pose.center):
        side = -(c2.legs @ (c2.X_O - center))
        if np.any(side * want <= 0):
            return False
    probe = np.random.default_rng(spec.seed)
    for S in LEGS:
        X = _sample_triangle(probe, visible_triangle(c2, S, spec.occlusion), n_probe)
        if _visible_mask(X, M_c, M_p, spec).mean() < min_coverage:
            return False
    return True


def random_corner(seed: int, convexity: str | None = None, camera: Intrinsics = REFERENCE_CAMERA,
                  camera_size=REFERENCE_CAMERA_SIZE) -> tuple[C2Model, VertexImages]:
    """A compact corner fully inside the camera image.

    Legs are at most 0.3 of the distance to the right-angle vertex, which
    keeps both mirror interpretations of the image in front of the camera.
    """
    rng = np.random.default_rng([seed, 15485863])
    if convexity is None:
        convexity = CONCAVE if rng.random() < 0.5 else CONVEX
    M = compose(camera)
    while True:
        D = rng.uniform(2.0, 5.0)
        target = D * np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 1.0])
        R = corner_rotation(rng, -target / np.linalg.norm(target), convexity)
        legs = rng.uniform(0.1, 0.3, 3) * D
        X_O = target - (R * legs).sum(axis=1) / 4.0
        if max(legs) > 0.3 * np.linalg.norm(X_O):
            continue
        X = np.vstack([X_O, X_O + (R * legs).T])
        if np.any(M.depth(X) <= 0):
            continue
        x = project(M, X)
        if _in_image(x, camera_size).all() and np.min(np.linalg.norm(x[1:] - x[0], axis=1)) >= 20.0:
            return C2Model(*X, convexity=convexity), VertexImages.from_array(x)


def two_view_spec(seed: int, camera: Intrinsics = REFERENCE_CAMERA, camera_size=REFERENCE_CAMERA_SIZE,
                  **kw) -> SceneSpec:
    """Two views of a corner taken by one camera (the second view plays the projector)."""
    kw.setdefault("baseline", (0.4, 0.8))
    return random_scene_spec(seed, camera=camera, camera_size=camera_size, projector=camera,
                             projector_size=camera_size, **kw)


def default_scene_spec(**kw) -> SceneSpec:
    """Reference camera and projector observing a fixed concave corner."""
    return random_scene_spec(0, convexity=CONCAVE, **kw)


def face_through_center_spec(face: str = "B", seed: int = 0, **kw) -> SceneSpec:
    """A scene whose face ``face`` contains the camera center.

    Starting from a random well-posed scene, the corner is rotated about its
    right-angle vertex until leg ``face`` (the normal of that face) is
    orthogonal to the vertex's viewing ray.  Every sample on the face then
    images onto a single camera line.
    """
    i = LEGS.index(face)
    for k in range(100):
        base = random_scene_spec(seed + 1000 * k, **kw)
        d = base.c2_origin / np.linalg.norm(base.c2_origin)
        n = base.c2_rotation[:, i]
        u = n - (n @ d) * d
        R = _align(n, u / np.linalg.norm(u)) @ base.c2_rotation
        spec = base.replace(c2_rotation=R)
        try:
            generate_scene(spec.replace(samples_per_face=8))
        except VisibilityFailure:
            continue
        return spec
    raise VisibilityFailure(f"no visible scene with face {face} through the camera center")


def sphere_matches(spec: SceneSpec, center: np.ndarray, radius: float, n: int = 2000,
                   seed: int = 0, sigma: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample the part of a sphere facing both devices and inside both images.

    Returns ``(cam_pixels, proj_pixels, points)``; projector pixels get the
    spec's noise level unless ``sigma`` overrides it.
    """
    rng = np.random.default_rng([seed, 104729])
    center = np.asarray(center, dtype=float)
    c_proj = spec.projector_pose.center
    M_c = compose(spec.camera)
    M_p = compose(spec.projector, spec.projector_pose)
    pts, total = [], 0
    for _ in range(100):
        v = rng.normal(size=(4 * n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        X = center + radius * v
        vis = ((-X) * v).sum(axis=1) > 0
        vis &= ((c_proj - X) * v).sum(axis=1) > 0
        X = X[vis]
        X = X[_visible_mask(X, M_c, M_p, spec)]
        pts.append(X)
        total += len(X)
        if total >= n:
            break
    else:
        raise VisibilityFailure("sphere is not visible to both devices")
    X = np.vstack(pts)[:n]
    xc = project(M_c, X)
    xp = project(M_p, X)
    s = spec.sigma if sigma is None else sigma
    if s > 0:
        xp = _add_noise(rng, xp, s, spec.projector_size)
    return xc, xp, X


def default_sphere(spec: SceneSpec) -> tuple[np.ndarray, float]:
    """A 50.8 mm sphere (scene units are metres) floating in front of the corner.

    It sits on the viewing ray of the corner's centroid, nearer to the camera
    than any corner vertex, so the corner never hides it.
    """
    c2 = spec.c2_model()
    d = c2.vertices.mean(axis=0)
    d /= np.linalg.norm(d)
    nearest = np.min(c2.vertices @ d)
    return 0.8 * nearest * d, 0.0254
