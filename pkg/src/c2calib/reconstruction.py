"""Two-view reconstruction with a calibrated camera-projector pair."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .c2 import LEGS
from .errors import DegenerateConfiguration, EmptyOutput, InsufficientPoints
from .geometry import compose
from .geometry import triangulate_points as _triangulate_points

LABELS = ("A", "B", "C", "other")
LABEL_CODES = {name: i for i, name in enumerate(LABELS)}
GAUGE = "right-angle vertex at unit depth scalar along its camera ray"


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Triangulated points in the camera frame (reconstruction gauge).

    ``index`` holds each point's position in the input correspondences so
    callers can line points up with their source matches.
    """

    points: np.ndarray
    labels: np.ndarray
    index: np.ndarray = field(default=None)
    n_dropped: int = 0
    gauge: str = GAUGE

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=object).reshape(-1)
        if len(labels) != len(pts):
            raise ValueError("one label per point required")
        if not np.isfinite(pts).all():
            raise ValueError("point cloud contains non-finite coordinates")
        bad = set(labels.tolist()) - set(LABELS)
        if bad:
            raise ValueError(f"unknown labels {sorted(bad)}")
        index = np.arange(len(pts)) if self.index is None else np.asarray(self.index, dtype=int)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.points)

    def face(self, label: str) -> np.ndarray:
        return self.points[self.labels == label]

    def scaled(self, s: float) -> PointCloud:
        return PointCloud(s * self.points, self.labels, self.index, self.n_dropped, self.gauge)


def _projection_matrices(report):
    M_c = compose(report.camera)
    M_p = compose(report.projector, report.pose)
    return M_c, M_p


def reconstruct_points(report, cam: np.ndarray, proj: np.ndarray, label: str = "other") -> PointCloud:
    """Triangulate one set of correspondences, dropping points behind either device.

    Raises
    ------
    EmptyOutput
        No point survives, including the zero-baseline case.
    """
    return reconstruct(report, {label: (cam, proj)})


def reconstruct(report, matches) -> PointCloud:
    """Triangulate all correspondences with the report's calibration.

    ``matches`` is a :class:`~c2calib.transfer.FaceMatches` (points are
    labelled by face) or a mapping ``label -> (cam_pixels, proj_pixels)``.
    Output order follows the input: faces in A, B, C order, then any other
    labels in mapping order.
    """
    if hasattr(matches, "cam") and hasattr(matches, "proj"):
        groups = {S: (matches.cam[S], matches.proj[S]) for S in LEGS}
    else:
        groups = dict(matches)
    M_c, M_p = _projection_matrices(report)
    pts, labels, index = [], [], []
    offset, dropped = 0, 0
    for label, (xc, xp) in groups.items():
        xc = np.asarray(xc, dtype=float).reshape(-1, 2)
        xp = np.asarray(xp, dtype=float).reshape(-1, 2)
        if len(xc) == 0:
            continue
        try:
            X, ok = _triangulate_points(M_c, M_p, xc, xp)
        except DegenerateConfiguration as exc:
            raise EmptyOutput(f"nothing can be triangulated: {exc}") from exc
        pts.append(X[ok])
        labels.extend([label] * int(ok.sum()))
        index.append(offset + np.flatnonzero(ok))
        dropped += int((~ok).sum())
        offset += len(xc)
    if not labels:
        raise EmptyOutput("every correspondence failed the cheirality test")
    return PointCloud(np.vstack(pts), np.array(labels, dtype=object), np.concatenate(index), dropped)


def fit_plane(X: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares plane ``n . X + d = 0`` with unit ``n``."""
    X = np.asarray(X, dtype=float)
    c = X.mean(axis=0)
    _, _, Vt = np.linalg.svd(X - c, full_matrices=False)
    n = Vt[-1]
    return n, float(-n @ c)


@dataclass(frozen=True)
class Orthogonality:
    """Dihedral angles between fitted face planes (degrees).

    Pairs involving a face with no points are ``None``.
    """

    angles: dict
    deviations: dict

    @property
    def max_deviation(self) -> float:
        vals = [v for v in self.deviations.values() if v is not None]
        return max(vals) if vals else float("nan")


def orthogonality_metric(cloud: PointCloud, min_points: int = 3) -> Orthogonality:
    """Angle between each pair of fitted face planes and its deviation from 90 degrees.

    Raises
    ------
    InsufficientPoints
        A face has between one and ``min_points - 1`` points, or fewer than
        two faces are present.
    """
    normals = {}
    for S in LEGS:
        X = cloud.face(S)
        if len(X) == 0:
            continue
        if len(X) < min_points:
            raise InsufficientPoints(f"face {S} has {len(X)} points; need {min_points} to fit a plane")
        normals[S] = fit_plane(X)[0]
    if len(normals) < 2:
        raise InsufficientPoints("need at least two labelled faces")
    angles, dev = {}, {}
    for S1, S2 in combinations(LEGS, 2):
        key = S1 + S2
        if S1 in normals and S2 in normals:
            c = abs(float(normals[S1] @ normals[S2]))
            a = float(np.degrees(np.arccos(np.clip(c, 0.0, 1.0))))
            angles[key], dev[key] = a, 90.0 - a
        else:
            angles[key], dev[key] = None, None
    return Orthogonality(angles, dev)


def scale_align(X: np.ndarray, Y: np.ndarray) -> float:
    """Scale ``s`` minimising ``||s X - Y||`` for matched point sets."""
    X = np.asarray(X, dtype=float)
    return float(np.sum(X * Y) / np.sum(X * X))


# -- PLY ---------------------------------------------------------------------

_PLY_TYPES = {"double": "<f8", "float": "<f4", "int": "<i4", "uchar": "u1"}


def write_ply(path, cloud: PointCloud, binary: bool = False) -> None:
    """Write ``x y z face`` vertices; ``face`` codes A, B, C, other as 0..3."""
    codes = np.array([LABEL_CODES[l] for l in cloud.labels], dtype=np.int32)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"comment gauge: {cloud.gauge}\n"
        f"comment face codes: {' '.join(f'{i}={n}' for n, i in LABEL_CODES.items())}\n"
        f"element vertex {len(cloud)}\n"
        "property double x\nproperty double y\nproperty double z\n"
        "property int face\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            rec = np.empty(len(cloud), dtype=[("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("face", "<i4")])
            rec["x"], rec["y"], rec["z"] = cloud.points.T
            rec["face"] = codes
            fh.write(rec.tobytes())
        else:
            lines = [f"{x!r} {y!r} {z!r} {c}\n" for (x, y, z), c in zip(cloud.points.tolist(), codes.tolist())]
            fh.write("".join(lines).encode("ascii"))


def read_ply(path) -> PointCloud:
    """Read a file written by :func:`write_ply` (ASCII or binary)."""
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    if header[0] != "ply":
        raise ValueError("not a PLY file")
    fmt = header[1].split()[1]
    n, props, gauge = 0, [], GAUGE
    for line in header:
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts[0] == "property":
            props.append((parts[2], _PLY_TYPES[parts[1]]))
        elif line.startswith("comment gauge: "):
            gauge = line[len("comment gauge: "):]
    dtype = np.dtype(props)
    if fmt == "ascii":
        rows = np.loadtxt(data[end:].decode("ascii").splitlines(), ndmin=2) if n else np.zeros((0, len(props)))
        rec = np.empty(n, dtype=dtype)
        for i, (name, _) in enumerate(props):
            rec[name] = rows[:, i]
    elif fmt == "binary_little_endian":
        rec = np.frombuffer(data[end:], dtype=dtype, count=n)
    else:
        raise ValueError(f"unsupported PLY format {fmt}")
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(float)
    codes = rec["face"] if "face" in rec.dtype.names else np.full(n, LABEL_CODES["other"])
    labels = np.array([LABELS[int(c)] for c in codes], dtype=object)
    return PointCloud(pts, labels, gauge=gauge)
