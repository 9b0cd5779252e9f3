"""Single-view recovery of a cuboid corner (C2) from its four vertex images.

With the right-angle vertex depth fixed to one, the three leg-orthogonality
constraints are bilinear in the remaining depths.  The first and third give
``lambda_B`` and ``lambda_C`` as Moebius functions of ``lambda_A``;
substituting both into the second and clearing denominators leaves a
quadratic in ``lambda_A`` whose two roots are the mirror-image ("concave" and
"convex") interpretations of the same image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvexityMismatch,
    DegenerateImages,
    NearDegenerate,
    NoRealSolution,
    NonPositiveDepth,
)
from .geometry import back_project_ray, homogeneous, iac

CONCAVE = "concave"
CONVEX = "convex"
CONVEXITIES = (CONCAVE, CONVEX)
LEGS = ("A", "B", "C")
MIN_DEPTH = 1e-6


def check_convexity(label: str) -> str:
    if label not in CONVEXITIES:
        raise ValueError(f"convexity must be 'concave' or 'convex', got {label!r}")
    return label


def opposite(label: str) -> str:
    return CONVEX if check_convexity(label) == CONCAVE else CONCAVE


@dataclass(frozen=True, eq=False)
class VertexImages:
    """Images of the right-angle vertex O and far vertices A, B, C in one view."""

    O: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        for name in "OABC":
            v = np.array(getattr(self, name), dtype=float).reshape(2)
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    @classmethod
    def from_array(cls, pts) -> VertexImages:
        pts = np.asarray(pts, dtype=float).reshape(4, 2)
        return cls(*pts)

    def as_array(self) -> np.ndarray:
        return np.stack([self.O, self.A, self.B, self.C])

    def __getitem__(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {k: self[k].tolist() for k in "OABC"}

    @classmethod
    def from_dict(cls, d: dict) -> VertexImages:
        return cls(*(d[k] for k in "OABC"))


@dataclass(frozen=True, eq=False)
class C2Model:
    """A cuboid corner in camera coordinates (defined up to scale).

    Face ``S`` is the plane through ``X_O`` spanned by the two legs other than
    ``n_S``, so ``n_S`` is its normal.
    """

    X_O: np.ndarray
    X_A: np.ndarray
    X_B: np.ndarray
    X_C: np.ndarray
    convexity: str = field(default=None)

    def __post_init__(self):
        for name in ("X_O", "X_A", "X_B", "X_C"):
            v = np.array(getattr(self, name), dtype=float).reshape(3)
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        if self.convexity is None:
            object.__setattr__(self, "convexity", _label_from_vertices(self.vertices))
        else:
            check_convexity(self.convexity)

    @property
    def vertices(self) -> np.ndarray:
        return np.stack([self.X_O, self.X_A, self.X_B, self.X_C])

    @property
    def legs(self) -> np.ndarray:
        """Rows ``n_A, n_B, n_C``."""
        return np.stack([self.X_A, self.X_B, self.X_C]) - self.X_O

    def leg(self, name: str) -> np.ndarray:
        return self.legs[LEGS.index(name)]

    @property
    def rotation(self) -> np.ndarray:
        """Columns are the normalized legs."""
        n = self.legs
        return (n / np.linalg.norm(n, axis=1, keepdims=True)).T

    @property
    def translation(self) -> np.ndarray:
        return self.X_O.copy()

    @property
    def ratios(self) -> tuple[float, float]:
        """``(k_B, k_C)`` with ``|n_C| : |n_B| : |n_A| = k_C : k_B : 1``."""
        a, b, c = np.linalg.norm(self.legs, axis=1)
        return float(b / a), float(c / a)

    def face_plane(self, face: str) -> tuple[np.ndarray, float]:
        """``(normal, d)`` with ``normal @ X + d = 0`` on face ``face``."""
        n = self.leg(face)
        return n, float(-n @ self.X_O)

    def orthogonality_residual(self) -> float:
        """Largest ``|n_i . n_j| / (|n_i| |n_j|)`` over the three leg pairs."""
        n = self.legs
        norms = np.linalg.norm(n, axis=1)
        G = np.abs(n @ n.T) / np.outer(norms, norms)
        return float(max(G[0, 1], G[1, 2], G[2, 0]))

    def scaled(self, s: float) -> C2Model:
        return C2Model(*(s * self.vertices), convexity=self.convexity)

    def to_dict(self) -> dict:
        k_b, k_c = self.ratios
        return {
            "vertices": {k: v.tolist() for k, v in zip("OABC", self.vertices)},
            "R": self.rotation.tolist(),
            "t": self.translation.tolist(),
            "k_B": k_b,
            "k_C": k_c,
            "convexity": self.convexity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> C2Model:
        v = d["vertices"]
        return cls(v["O"], v["A"], v["B"], v["C"], convexity=d["convexity"])


@dataclass(frozen=True)
class C2Root:
    lambdas: tuple[float, float, float]
    model: C2Model | None
    label: str | None
    residual: float

    @property
    def positive(self) -> bool:
        return self.model is not None and min(self.lambdas) > MIN_DEPTH


@dataclass(frozen=True)
class C2Solutions:
    """All real roots of the elimination quadratic (``lambda_O = 1``)."""

    roots: tuple[C2Root, ...]
    coefficients: tuple[float, float, float]
    discriminant: float


def back_project(K, x, lam: float) -> np.ndarray:
    """Scene point ``lam * K^-1 (x, 1)``."""
    if not lam > 0:
        raise ValueError(f"depth scalar must be positive, got {lam}")
    return lam * back_project_ray(K, np.asarray(x, dtype=float))


def classify_convexity(c2: C2Model) -> str:
    """Label a corner by the side of its faces the camera sits on.

    The camera (at the origin) lies on the positive side of face ``S`` when
    ``-X_O . n_S > 0``.  A camera inside the octant spanned by the legs sees
    a concave corner (room interior); one in the opposite octant sees a
    convex corner (box exterior).  The sign of the product of the three
    terms decides, so negating a single leg flips the label.
    """
    return _label_from_vertices(c2.vertices)


def _label_from_vertices(X: np.ndarray) -> str:
    n = X[1:] - X[0]
    norms = np.linalg.norm(n, axis=1)
    if np.any(norms == 0) or abs(np.linalg.det(n)) < 1e-10 * np.prod(norms):
        raise NearDegenerate("corner legs are coplanar")
    side = -(n @ X[0])
    if np.any(np.abs(side) <= 1e-12 * norms * np.linalg.norm(X[0])):
        raise NearDegenerate("a corner face passes through the camera center")
    return CONCAVE if np.prod(np.sign(side)) > 0 else CONVEX


def _stable_quadratic_roots(a: float, b: float, c: float) -> tuple[list[float], float]:
    disc = b * b - 4.0 * a * c
    scale = max(abs(a), abs(b), abs(c))
    if abs(a) <= 1e-14 * scale:
        return ([-c / b] if b != 0 else []), disc
    if disc < 0:
        return [], disc
    q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
    if q == 0:
        return [0.0, 0.0], disc
    return sorted([q / a, c / q]), disc


def elimination_quadratic(K, v: VertexImages) -> tuple[tuple[float, float, float], float]:
    """Coefficients of the quadratic in ``lambda_A`` and its discriminant.

    Raises
    ------
    DegenerateImages
        Coincident vertex images or an identically vanishing system.
    """
    p, _ = _quadratic(K, v.as_array())
    return (float(p[0]), float(p[1]), float(p[2])), float(p[1] * p[1] - 4.0 * p[0] * p[2])


def _quadratic(K, pts: np.ndarray):
    """Quadratic in ``lambda_A`` plus the pieces needed to back-substitute."""
    scale = max(np.abs(pts).max(), 1.0)
    for i in range(4):
        for j in range(i + 1, 4):
            if np.linalg.norm(pts[i] - pts[j]) <= 1e-9 * scale:
                raise DegenerateImages(f"vertex images {'OABC'[i]} and {'OABC'[j]} coincide")

    w = iac(K)
    h = homogeneous(pts)
    a = h @ w @ h.T
    oo, ao, bo, co = a[0, 0], a[1, 0], a[2, 0], a[3, 0]
    ab, ac, bc = a[1, 2], a[1, 3], a[2, 3]
    # numerator of lambda_B and lambda_C, and their denominators, as polys in lambda_A
    N = np.array([ao, -oo])
    DB = np.array([ab, -bo])
    DC = np.array([ac, -co])
    p = (
        bc * np.polymul(N, N)
        - bo * np.polymul(N, DC)
        - co * np.polymul(N, DB)
        + oo * np.polymul(DB, DC)
    )
    p = np.pad(p, (3 - len(p), 0))
    if np.all(np.abs(p) <= 1e-14 * abs(oo) ** 2):
        raise DegenerateImages("orthogonality system vanishes identically")
    return p, (a, N, DB, DC)


def solve_c2_all(K, v: VertexImages) -> C2Solutions:
    """Every real root of the orthogonality system for vertex images ``v``.

    Raises
    ------
    DegenerateImages
        Coincident vertex images or an identically vanishing system.
    NoRealSolution
        Negative discriminant.
    """
    pts = v.as_array()
    p, (a, N, DB, DC) = _quadratic(K, pts)
    lam_a_roots, disc = _stable_quadratic_roots(*p)
    if disc < 0:
        raise NoRealSolution("negative discriminant: no real corner explains these images")

    rays = back_project_ray(K, pts)
    roots = []
    for la in lam_a_roots:
        db = np.polyval(DB, la)
        dc = np.polyval(DC, la)
        n = np.polyval(N, la)
        if db == 0 or dc == 0:
            continue
        lams = (float(la), float(n / db), float(n / dc))
        X = np.vstack([rays[0], np.array(lams)[:, None] * rays[1:]])
        model, label = None, None
        try:
            label = _label_from_vertices(X)
            model = C2Model(*X, convexity=label)
        except NearDegenerate:
            pass
        roots.append(C2Root(lams, model, label, _equation_residual(a, lams)))
    return C2Solutions(tuple(roots), (float(p[0]), float(p[1]), float(p[2])), float(disc))


def _equation_residual(a: np.ndarray, lams) -> float:
    """Largest relative residual of the three orthogonality equations."""
    l = np.array([1.0, *lams])
    pairs = ((1, 2), (2, 3), (3, 1))
    worst = 0.0
    for i, j in pairs:
        r = l[i] * l[j] * a[i, j] - l[i] * a[i, 0] - l[j] * a[j, 0] + a[0, 0]
        norm = (
            abs(l[i] * l[j] * a[i, j]) + abs(l[i] * a[i, 0]) + abs(l[j] * a[j, 0]) + abs(a[0, 0])
        )
        worst = max(worst, abs(r) / norm)
    return worst


def solve_c2(K, v: VertexImages, convexity: str) -> C2Model:
    """Recover the corner (``lambda_O = 1``) with the requested convexity."""
    check_convexity(convexity)
    sols = solve_c2_all(K, v)
    matching = [r for r in sols.roots if r.label == convexity]
    good = [r for r in matching if r.positive]
    if len(good) == 1:
        return good[0].model
    if len(good) > 1:
        # both mirror roots collapsed onto one label; keep the better-conditioned one
        return min(good, key=lambda r: r.residual).model
    if matching:
        raise NonPositiveDepth(f"the {convexity} root puts a vertex behind the camera center")
    if any(r.positive for r in sols.roots):
        raise ConvexityMismatch(f"no {convexity} root exists for these vertex images")
    raise NonPositiveDepth("every root puts a vertex behind the camera center")
