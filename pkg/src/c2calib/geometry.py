"""Homogeneous-coordinate primitives shared by every other module.

Pinhole projection, the image of the absolute conic, normalized DLT for
homographies and camera resection, RQ decomposition of camera matrices and
linear two-view triangulation.  All functions are pure and work on plain
``numpy`` arrays; inhomogeneous points are ``(2,)``/``(3,)`` arrays or
``(N, 2)``/``(N, 3)`` stacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    DegenerateProjection,
    SingularCamera,
)

RANK_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Natural-camera intrinsics: square pixels, explicit skew (0 by default)."""

    f: float
    pp: tuple[float, float] = (0.0, 0.0)
    skew: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.f) or self.f <= 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        object.__setattr__(self, "f", float(self.f))
        object.__setattr__(self, "pp", (float(self.pp[0]), float(self.pp[1])))
        object.__setattr__(self, "skew", float(self.skew))

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.f, self.skew, self.pp[0]], [0.0, self.f, self.pp[1]], [0.0, 0.0, 1.0]]
        )

    def to_general(self) -> GeneralIntrinsics:
        return GeneralIntrinsics(self.f, self.f, self.skew, self.pp)

    def to_dict(self) -> dict:
        return {"f": self.f, "pp": list(self.pp), "skew": self.skew}

    @classmethod
    def from_dict(cls, d: dict) -> Intrinsics:
        return cls(d["f"], tuple(d["pp"]), d.get("skew", 0.0))


@dataclass(frozen=True)
class GeneralIntrinsics:
    """Full upper-triangular intrinsics as returned by :func:`decompose`."""

    fx: float
    fy: float
    skew: float = 0.0
    pp: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        for name in ("fx", "fy", "skew"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "pp", (float(self.pp[0]), float(self.pp[1])))

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.pp[0]], [0.0, self.fy, self.pp[1]], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_matrix(cls, K: np.ndarray) -> GeneralIntrinsics:
        K = np.asarray(K, dtype=float)
        K = K / K[2, 2]
        return cls(K[0, 0], K[1, 1], K[0, 1], (K[0, 2], K[1, 2]))

    def naturalized(self) -> Intrinsics:
        """Square-pixel, zero-skew camera with the mean focal length and same PP."""
        return Intrinsics(0.5 * (self.fx + self.fy), self.pp, 0.0)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "skew": self.skew, "pp": list(self.pp)}

    @classmethod
    def from_dict(cls, d: dict) -> GeneralIntrinsics:
        return cls(d["fx"], d["fy"], d["skew"], tuple(d["pp"]))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``X_target = R @ X_source + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    def inverse(self) -> Pose:
        return Pose(self.R.T, -self.R.T @ self.t)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.R.T + self.t

    @property
    def center(self) -> np.ndarray:
        """Origin of the target frame expressed in the source frame."""
        return -self.R.T @ self.t

    def is_valid(self, tol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.R.T @ self.R, np.eye(3), atol=tol)
            and abs(np.linalg.det(self.R) - 1.0) < tol
        )


@dataclass(frozen=True, eq=False)
class ProjectiveCamera:
    """A finite 3x4 camera matrix, defined up to scale."""

    M: np.ndarray = field(repr=False)

    def __post_init__(self):
        M = np.array(self.M, dtype=float).reshape(3, 4)
        M.flags.writeable = False
        object.__setattr__(self, "M", M)

    @classmethod
    def from_parts(cls, K, pose: Pose | None = None) -> ProjectiveCamera:
        return compose(K, pose)

    @property
    def center(self) -> np.ndarray:
        return -np.linalg.solve(self.M[:, :3], self.M[:, 3])

    def depth(self, X: np.ndarray) -> np.ndarray:
        """Signed depth of points along the principal axis (scale-free)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Ml = self.M[:, :3]
        w = X @ Ml[2] + self.M[2, 3]
        return np.sign(np.linalg.det(Ml)) * w / np.linalg.norm(Ml[2])

    def project(self, X: np.ndarray) -> np.ndarray:
        return project(self, X)


def _as_K(K) -> np.ndarray:
    if isinstance(K, (Intrinsics, GeneralIntrinsics)):
        return K.K
    return np.asarray(K, dtype=float)


def _as_M(M) -> np.ndarray:
    if isinstance(M, ProjectiveCamera):
        return M.M
    return np.asarray(M, dtype=float)


def homogeneous(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def dehomogenize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., :-1] / x[..., -1:]


def normalize_homogeneous(A: np.ndarray) -> np.ndarray:
    """Scale to unit Frobenius norm with the largest-magnitude entry positive."""
    A = np.asarray(A, dtype=float)
    A = A / np.linalg.norm(A)
    flat = A.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        A = -A
    return A


def compose(K, pose: Pose | None = None) -> ProjectiveCamera:
    """Camera matrix ``K [R | t]``."""
    pose = Pose.identity() if pose is None else pose
    return ProjectiveCamera(_as_K(K) @ np.column_stack([pose.R, pose.t]))


def project(M, X: np.ndarray) -> np.ndarray:
    """Pinhole projection of one point ``(3,)`` or a stack ``(N, 3)``.

    Raises
    ------
    DegenerateProjection
        If any point has depth at or below ``1e-12 * |t|`` (absolute
        ``1e-12`` when the camera sits at the origin).
    """
    cam = M if isinstance(M, ProjectiveCamera) else ProjectiveCamera(M)
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xs = np.atleast_2d(X)
    depth = cam.depth(Xs)
    dist = np.linalg.norm(cam.center)
    eps = 1e-12 * dist if dist > 0 else 1e-12
    if np.any(depth <= eps):
        raise DegenerateProjection(
            f"{int(np.sum(depth <= eps))} point(s) at or behind the camera plane"
        )
    x = dehomogenize(homogeneous(Xs) @ cam.M.T)
    return x[0] if single else x


def back_project_ray(K, x: np.ndarray) -> np.ndarray:
    """Viewing ray(s) ``K^-1 (x, 1)`` with unit last coordinate."""
    return np.linalg.solve(_as_K(K), homogeneous(x).T).T


def iac(K) -> np.ndarray:
    """Image of the absolute conic ``K^-T K^-1``."""
    Kinv = np.linalg.inv(_as_K(K))
    w = Kinv.T @ Kinv
    return 0.5 * (w + w.T)


def normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with RMS distance sqrt(d)."""
    pts = np.asarray(pts, dtype=float)
    d = pts.shape[1]
    c = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - c) ** 2, axis=1)))
    if not np.isfinite(rms) or rms == 0:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(d) / rms
    T = np.eye(d + 1)
    T[:d, :d] *= s
    T[:d, d] = -s * c
    return T


def _null_vector(A: np.ndarray, expected_rank: int, what: str) -> np.ndarray:
    # a wide matrix needs the full V to expose its null space
    _, s, Vt = np.linalg.svd(A, full_matrices=A.shape[0] < A.shape[1])
    if len(s) < expected_rank or s[expected_rank - 1] <= RANK_TOL * s[0]:
        raise DegenerateConfiguration(f"{what}: design matrix rank < {expected_rank}")
    return Vt[-1]


def estimate_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT homography mapping ``src`` onto ``dst``.

    Parameters
    ----------
    src, dst : (N, 2) array
        Corresponding pixels, ``N >= 4`` and no three source points collinear.

    Returns
    -------
    H : (3, 3) array
        Unit Frobenius norm, largest-magnitude entry positive.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (N, 2)")
    if len(src) < 4:
        raise DegenerateConfiguration(f"homography needs >= 4 pairs, got {len(src)}")
    T1 = normalizing_transform(src)
    T2 = normalizing_transform(dst)
    p = homogeneous(src) @ T1.T
    q = homogeneous(dst) @ T2.T
    n = len(p)
    A = np.zeros((2 * n, 9))
    A[0::2, 3:6] = -q[:, 2:3] * p
    A[0::2, 6:9] = q[:, 1:2] * p
    A[1::2, 0:3] = q[:, 2:3] * p
    A[1::2, 6:9] = -q[:, 0:1] * p
    h = _null_vector(A, 8, "homography")
    H = np.linalg.solve(T2, h.reshape(3, 3) @ T1)
    return normalize_homogeneous(H)


def apply_homography(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return dehomogenize(homogeneous(pts) @ np.asarray(H).T)


def symmetric_transfer_error(H: np.ndarray, src: np.ndarray, dst: np.ndarray) -> float:
    """Mean of forward and backward transfer distances (pixels)."""
    fwd = np.linalg.norm(apply_homography(H, src) - dst, axis=1)
    bwd = np.linalg.norm(apply_homography(np.linalg.inv(H), dst) - src, axis=1)
    return float(0.5 * (fwd.mean() + bwd.mean()))


def reprojection_errors(M, X: np.ndarray, x: np.ndarray) -> np.ndarray:
    M = _as_M(M)
    proj = dehomogenize(homogeneous(X) @ M.T)
    return np.linalg.norm(proj - x, axis=1)


def resect_dlt(X: np.ndarray, x: np.ndarray) -> tuple[ProjectiveCamera, float]:
    """Normalized DLT camera resection from 3D-2D correspondences.

    Returns the camera and the mean reprojection error (pixels) on the inputs.
    Raises :class:`DegenerateConfiguration` for fewer than six points or a
    rank-deficient design matrix (e.g. coplanar scene points).
    """
    X = np.asarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(X) != len(x):
        raise ValueError("X and x must have the same length")
    if len(X) < 6:
        raise DegenerateConfiguration(f"resection needs >= 6 points, got {len(X)}")
    T3 = normalizing_transform(X)
    T2 = normalizing_transform(x)
    P = homogeneous(X) @ T3.T
    q = homogeneous(x) @ T2.T
    n = len(P)
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = P
    A[0::2, 8:12] = -q[:, 0:1] * P
    A[1::2, 4:8] = P
    A[1::2, 8:12] = -q[:, 1:2] * P
    if n > 2000:
        # same null vector, much cheaper SVD on the triangular factor
        A = _triangular_factor(A)
    m = _null_vector(A, 11, "resection")
    M = np.linalg.solve(T2, m.reshape(3, 4) @ T3)
    if np.linalg.det(M[:, :3]) < 0:
        M = -M
    M = M / np.linalg.norm(M)
    return ProjectiveCamera(M), float(reprojection_errors(M, X, x).mean())


def _triangular_factor(A: np.ndarray, block: int = 4096) -> np.ndarray:
    """R of a tall matrix by blockwise QR (cache friendly, same singular values)."""
    Rs = [np.linalg.qr(A[i:i + block], mode="r") for i in range(0, len(A), block)]
    return np.linalg.qr(np.vstack(Rs), mode="r") if len(Rs) > 1 else Rs[0]


def decompose(M) -> tuple[GeneralIntrinsics, Pose]:
    """Split ``M`` into ``K [R | t]`` with positive K diagonal and ``det R = +1``."""
    M = _as_M(M)
    Ml = M[:, :3]
    s = np.linalg.svd(Ml, compute_uv=False)
    if not np.all(np.isfinite(s)) or s[-1] <= 1e-12 * s[0]:
        raise SingularCamera("left 3x3 block is singular")
    if np.linalg.det(Ml) < 0:
        M = -M
        Ml = -Ml
    K, R = scipy.linalg.rq(Ml)
    D = np.diag(np.sign(np.diag(K)))
    K = K @ D
    R = D @ R
    t = np.linalg.solve(K, M[:, 3])
    return GeneralIntrinsics.from_matrix(K), Pose(R, t)


def triangulate_points(M1, M2, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear (homogeneous DLT) triangulation of many correspondences.

    Returns ``(X, ok)`` where ``ok`` flags points in front of both cameras.
    """
    M1 = normalize_homogeneous(_as_M(M1))
    M2 = normalize_homogeneous(_as_M(M2))
    c1 = ProjectiveCamera(M1).center
    c2 = ProjectiveCamera(M2).center
    if np.linalg.norm(c1 - c2) <= 1e-12 * max(np.linalg.norm(c1), np.linalg.norm(c2), 1.0):
        raise DegenerateConfiguration("camera centers coincide (zero baseline)")
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    # condition pixels so all rows have comparable magnitude
    T1 = normalizing_transform(x1) if len(x1) > 1 else _pixel_scale(x1)
    T2 = normalizing_transform(x2) if len(x2) > 1 else _pixel_scale(x2)
    P1 = T1 @ M1
    P2 = T2 @ M2
    u1 = homogeneous(x1) @ T1.T
    u2 = homogeneous(x2) @ T2.T
    A = np.stack(
        [
            u1[:, 0:1] * P1[2] - P1[0],
            u1[:, 1:2] * P1[2] - P1[1],
            u2[:, 0:1] * P2[2] - P2[0],
            u2[:, 1:2] * P2[2] - P2[1],
        ],
        axis=1,
    )
    A /= np.linalg.norm(A, axis=2, keepdims=True)
    _, _, Vt = np.linalg.svd(A)
    Xh = Vt[:, -1, :]
    X = Xh[:, :3] / Xh[:, 3:4]
    with np.errstate(invalid="ignore"):
        ok = (
            np.isfinite(X).all(axis=1)
            & (ProjectiveCamera(M1).depth(X) > 0)
            & (ProjectiveCamera(M2).depth(X) > 0)
        )
    return X, ok


def _pixel_scale(x: np.ndarray) -> np.ndarray:
    s = 1.0 / max(np.abs(x).max(), 1.0)
    return np.diag([s, s, 1.0])


def triangulate(M1, M2, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Triangulate one correspondence ``(2,)`` or a stack ``(N, 2)``.

    Raises :class:`BehindCamera` if any point fails cheirality in either view.
    """
    single = np.asarray(x1).ndim == 1
    X, ok = triangulate_points(M1, M2, x1, x2)
    if not ok.all():
        raise BehindCamera(f"{int((~ok).sum())} point(s) behind a camera")
    return X[0] if single else X


def rotation_angle(R1: np.ndarray, R2: np.ndarray) -> float:
    """Geodesic distance between two rotations (radians)."""
    c = (np.trace(np.asarray(R1).T @ np.asarray(R2)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
