"""Vertex and leg inference for a partially observed corner.

Each face induces a camera-to-projector homography.  For two faces B and C
the composition ``G = H_B @ inv(H_C)`` is a planar homology in the projector
image: its axis (a line of fixed points) is the image of the B/C
intersection, i.e. leg A, and its isolated fixed point is the epipole.  The
three leg lines give the right-angle vertex; far vertices are placed on the
legs from hints.  Projector-view vertices are obtained once by mapping the
camera-view vertices through the homographies of the faces containing them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .c2 import LEGS, VertexImages, check_convexity
from .errors import (
    DegenerateImages,
    InconsistentLegs,
    InputError,
    NotAHomology,
    RayParallelToPlane,
)
from .geometry import (
    apply_homography,
    estimate_homography,
    homogeneous,
    normalizing_transform,
    symmetric_transfer_error,
)

EIG_TOL = 1e-3
HOMOLOGY_TOL = 0.05
RA_GATE_PX = 3.0
MIN_LEG_PX = 20.0

# the two faces that meet along each leg
LEG_FACES = {"A": ("B", "C"), "B": ("C", "A"), "C": ("A", "B")}


@dataclass(frozen=True, eq=False)
class FaceHomographies:
    """Camera-to-projector homographies induced by faces A, B, C."""

    H: dict
    transfer_error: dict

    def __getitem__(self, face: str) -> np.ndarray:
        return self.H[face]


@dataclass(frozen=True, eq=False)
class LegLines:
    """Leg image lines (camera view) and the right-angle vertex image."""

    lines: dict
    RA: np.ndarray
    directions: dict = field(default_factory=dict)
    """Unit image directions pointing from RA into the observed faces."""
    extents: dict = field(default_factory=dict)
    """Farthest observed face point along each leg (pixels from RA)."""


@dataclass(frozen=True)
class InferenceInfo:
    homographies: FaceHomographies
    legs: LegLines | None
    vertex_spread: dict
    max_spread: float


def normalize_line(l: np.ndarray) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    n = np.hypot(l[0], l[1])
    if n == 0:
        raise InconsistentLegs("line at infinity")
    return l / n


def check_face_views(cam: dict, proj: dict) -> None:
    """Reject faces whose samples image onto a line in either view.

    That happens exactly when the face plane passes through the device
    center, which leaves the face's depth unobservable.
    """
    for view, pts_by_face, device in (("camera", cam, "camera"), ("projector", proj, "projector")):
        for S in LEGS:
            pts = np.asarray(pts_by_face.get(S, np.zeros((0, 2))), dtype=float)
            if len(pts) < 3:
                continue
            s = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
            if s[0] == 0 or s[1] <= 1e-9 * s[0]:
                raise RayParallelToPlane(
                    f"face {S} passes through the {device} center: "
                    f"its {view} image points are collinear"
                )


def estimate_face_homographies(cam: dict, proj: dict) -> FaceHomographies:
    H, err = {}, {}
    for S in LEGS:
        H[S] = estimate_homography(cam[S], proj[S])
        err[S] = symmetric_transfer_error(H[S], cam[S], proj[S])
    return FaceHomographies(H, err)


@dataclass(frozen=True)
class Homology:
    """Nearest planar homology ``mu * I + v a^T`` to a composed homography.

    ``axis`` is the line of fixed points and ``vertex`` the isolated fixed
    point, both in the coordinates of the composed map.
    """

    mu: float
    nu: float
    axis: np.ndarray
    vertex: np.ndarray
    residual: float
    """``s2 / s1`` of ``G - mu I``; zero for an exact homology."""


def fit_homology(G: np.ndarray, tol: float = EIG_TOL, max_residual: float = HOMOLOGY_TOL) -> Homology:
    """Fit ``G`` (up to scale) by a scaled identity plus a rank-one term.

    The repeated eigenvalue ``mu`` minimises the relative distance of
    ``G - mu I`` to rank one, searched around the mean of the two closest
    eigenvalues.  The rank-one remainder ``v a^T`` gives the axis ``a`` and
    the vertex ``v``.  On an exact homology this coincides with joining the
    two eigenvectors of the repeated eigenvalue, but it stays stable when
    noise splits that pair.

    Raises
    ------
    NotAHomology
        ``G`` is singular, (close to) a scaled identity, or too far from any
        homology.
    """
    G = np.asarray(G, dtype=float)
    det = np.linalg.det(G)
    if not np.isfinite(det) or det == 0:
        raise NotAHomology("composed homography is singular")
    G = G / np.cbrt(det)
    w = np.linalg.eigvals(G)
    i, j = min(((0, 1), (1, 2), (0, 2)), key=lambda p: abs(w[p[0]] - w[p[1]]))
    k = 3 - i - j
    m0 = float(np.real(w[i] + w[j])) / 2
    sep = abs(w[k] - m0)
    if sep <= tol * abs(m0):
        raise NotAHomology("all three eigenvalues coincide (faces induce the same homography)")
    I = np.eye(3)

    def tail(mu):
        # squared distance to the nearest rank-one matrix, relative; smooth in mu
        sv = np.linalg.svd(G - mu * I, compute_uv=False)
        return (sv[1] ** 2 + sv[2] ** 2) / sv[0] ** 2

    r = minimize_scalar(tail, bounds=(m0 - sep / 2, m0 + sep / 2), method="bounded",
                        options={"xatol": 1e-12 * max(1.0, abs(m0))})
    # the pair mean is exact on noiseless data, where the search only gets close
    mu = min((float(r.x), m0), key=tail)
    U, sv, Vt = np.linalg.svd(G - mu * I)
    res = sv[1] / sv[0]
    if res > max_residual:
        raise NotAHomology(f"composed homography is not a homology (rank-one residual {res:.3g}, eigenvalues {w})")
    vertex, axis = U[:, 0], Vt[0]
    # G v = (mu + a.v s1) v with the rank-one factor normalised to s1
    nu = mu + sv[0] * float(axis @ vertex)
    return Homology(mu, nu, axis, vertex, float(res))


def infer_leg_line(H_B: np.ndarray, H_C: np.ndarray, tol: float = EIG_TOL,
                   T: np.ndarray | None = None) -> np.ndarray:
    """Projector-view image of the intersection of the faces inducing ``H_B`` and ``H_C``.

    The line is the axis of the homology ``H_B @ inv(H_C)``.  ``T`` is an
    optional conditioning transform of projector coordinates (e.g. the
    similarity normalising the projector samples) under which the fit is
    carried out.
    """
    G = np.asarray(H_B) @ np.linalg.inv(H_C)
    if T is None:
        line = fit_homology(G, tol).axis
    else:
        line = T.T @ fit_homology(T @ G @ np.linalg.inv(T), tol).axis
    line = normalize_line(line)
    return line if line[2] >= 0 else -line


def homology_vertex(H_B: np.ndarray, H_C: np.ndarray, tol: float = EIG_TOL) -> np.ndarray:
    """Isolated fixed point of ``H_B @ inv(H_C)`` (projector-view epipole)."""
    return fit_homology(np.asarray(H_B) @ np.linalg.inv(H_C), tol).vertex


def _camera_line(l_proj: np.ndarray, H1: np.ndarray, H2: np.ndarray) -> np.ndarray:
    """Pull a projector-view line back through both adjacent face homographies."""
    a = normalize_line(H1.T @ l_proj)
    b = normalize_line(H2.T @ l_proj)
    if a @ b < 0:
        b = -b
    return normalize_line(a + b)


def intersect_lines(lines) -> np.ndarray:
    """Least-squares point closest (algebraically) to normalized lines."""
    L = np.array([normalize_line(l) for l in lines])
    A = L[:, :2]
    b = -L[:, 2]
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x


def infer_legs(H: FaceHomographies, cam: dict | None = None, proj: dict | None = None,
               tol: float = EIG_TOL) -> LegLines:
    """Camera-view leg lines and right-angle vertex from the face homographies.

    If camera-view face points are given, each leg gets a direction pointing
    into its two adjacent faces and the extent of those faces along it.
    Projector-view points, if given, condition the homology fits.
    """
    lines = {}
    T = None if proj is None else normalizing_transform(np.vstack([proj[S] for S in LEGS]))
    for S in LEGS:
        F1, F2 = LEG_FACES[S]
        l_proj = infer_leg_line(H[F1], H[F2], tol, T)
        lines[S] = _camera_line(l_proj, H[F1], H[F2])
    RA = right_angle_vertex(lines)
    directions, extents = {}, {}
    if cam is not None:
        for S in LEGS:
            l = lines[S]
            d = np.array([-l[1], l[0]])
            pts = np.vstack([np.asarray(cam[F], dtype=float) for F in LEG_FACES[S]])
            along = (pts - RA) @ d
            if along.mean() < 0:
                d, along = -d, -along
            directions[S] = d
            extents[S] = float(along.max())
    return LegLines(lines, RA, directions, extents)


def right_angle_vertex(lines: dict, gate: float = RA_GATE_PX) -> np.ndarray:
    """Least-squares intersection of the three legs, gated on their consistency."""
    pts = []
    for S1, S2 in (("A", "B"), ("B", "C"), ("C", "A")):
        p = np.cross(lines[S1], lines[S2])
        if abs(p[2]) <= 1e-12 * np.linalg.norm(p[:2]):
            raise InconsistentLegs(f"legs {S1} and {S2} are parallel")
        pts.append(p[:2] / p[2])
    pts = np.array(pts)
    spread = max(np.linalg.norm(pts[i] - pts[j]) for i in range(3) for j in range(i + 1, 3))
    if not np.isfinite(spread) or spread > gate:
        raise InconsistentLegs(f"pairwise leg intersections spread {spread:.3g} px > {gate} px")
    return intersect_lines([lines[S] for S in LEGS])


def snap_to_line(p: np.ndarray, l: np.ndarray) -> np.ndarray:
    """Orthogonal projection of pixel ``p`` onto line ``l``."""
    l = normalize_line(l)
    p = np.asarray(p, dtype=float)
    return p - (l[:2] @ p + l[2]) * l[:2]


def infer_vertices(legs: LegLines, hints: dict | None = None,
                   min_leg_px: float = MIN_LEG_PX) -> VertexImages:
    """Right-angle vertex plus one far vertex on each leg line.

    ``hints[S]`` is either an image point (snapped onto leg ``S``) or a
    scalar distance in pixels from the right-angle vertex along the leg's
    oriented direction.  Legs without a hint use the extent of the observed
    faces along that leg.
    """
    hints = hints or {}
    out = {"O": legs.RA}
    for S in LEGS:
        h = hints.get(S)
        if h is None:
            if S not in legs.extents:
                raise InputError(f"no hint for far vertex {S} and no face points to place it")
            h = legs.extents[S]
        h = np.asarray(h, dtype=float)
        if h.ndim == 0:
            if S not in legs.directions:
                raise InputError(f"scalar hint for leg {S} needs an oriented leg direction")
            p = legs.RA + float(h) * legs.directions[S]
        else:
            p = h.reshape(2)
        p = snap_to_line(p, legs.lines[S])
        if np.linalg.norm(p - legs.RA) < min_leg_px:
            raise DegenerateImages(f"far vertex {S} lies within {min_leg_px} px of the RA image")
        out[S] = p
    return VertexImages(out["O"], out["A"], out["B"], out["C"])


def map_vertices_to_projector(v: VertexImages, H: FaceHomographies) -> tuple[VertexImages, dict]:
    """Map camera-view vertices into the projector through every face containing them.

    Returns the averaged vertices and, per vertex, the largest distance
    between its candidate mappings.
    """
    containing = {"O": LEGS, "A": LEG_FACES["A"], "B": LEG_FACES["B"], "C": LEG_FACES["C"]}
    out, spread = {}, {}
    for name, faces in containing.items():
        cands = np.array([apply_homography(H[F], v[name][None])[0] for F in faces])
        out[name] = cands.mean(axis=0)
        spread[name] = float(
            max(np.linalg.norm(cands[i] - cands[j]) for i in range(len(cands)) for j in range(i + 1, len(cands)))
        )
    return VertexImages(out["O"], out["A"], out["B"], out["C"]), spread


def build_face_matches(cam: dict, proj: dict, convexity: str, cam_vertices: VertexImages | None = None,
                       hints: dict | None = None, tol: float = EIG_TOL):
    """Prepare :class:`~c2calib.transfer.FaceMatches` from raw per-face matches.

    Camera-view vertices are taken as given or inferred from the leg lines;
    projector-view vertices always come from the face homographies.
    """
    from .transfer import FaceMatches

    check_convexity(convexity)
    missing = [S for S in LEGS if len(cam.get(S, ())) < 4]
    if missing:
        raise InputError(f"faces {missing} have fewer than 4 matches")
    check_face_views(cam, proj)
    H = estimate_face_homographies(cam, proj)
    legs = None
    if cam_vertices is None:
        legs = infer_legs(H, cam, proj, tol)
        cam_vertices = infer_vertices(legs, hints)
    proj_vertices, spread = map_vertices_to_projector(cam_vertices, H)
    matches = FaceMatches(cam, proj, cam_vertices, proj_vertices, convexity)
    return matches, InferenceInfo(H, legs, spread, max(spread.values()))


def line_point_distance(l: np.ndarray, p: np.ndarray) -> float:
    l = normalize_line(l)
    return float(abs(l @ homogeneous(np.asarray(p, dtype=float))))
