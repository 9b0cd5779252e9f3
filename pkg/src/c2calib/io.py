"""File formats: match files (JSON), ground truth (JSON) and atomic writes.

A match file holds per-face correspondences as rows ``[xc, yc, xp, yp]``
plus what the calibration needs besides them: convexity, the camera
principal point and image sizes.  Camera-view vertex images may be given
directly (``vertices``); otherwise they are inferred from the faces, with
optional far-vertex ``vertex_hints`` (an image point or a distance in pixels
along the leg).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .c2 import CONVEXITIES, LEGS, VertexImages
from .errors import InputError
from .faces import build_face_matches

MATCH_FILE_VERSION = 1

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_SIZE = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2}
_ROW = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}

MATCH_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "faces", "convexity", "pp_c", "image_sizes"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": MATCH_FILE_VERSION},
        "faces": {
            "type": "object",
            "required": list(LEGS),
            "additionalProperties": False,
            "properties": {S: {"type": "array", "items": _ROW} for S in LEGS},
        },
        "convexity": {"enum": list(CONVEXITIES)},
        "pp_c": _POINT,
        "image_sizes": {
            "type": "object",
            "required": ["camera", "projector"],
            "additionalProperties": False,
            "properties": {"camera": _SIZE, "projector": _SIZE},
        },
        "vertices": {
            "type": "object",
            "required": list("OABC"),
            "additionalProperties": False,
            "properties": {k: _POINT for k in "OABC"},
        },
        "vertex_hints": {
            "type": "object",
            "additionalProperties": False,
            "properties": {S: {"oneOf": [_POINT, {"type": "number"}]} for S in LEGS},
        },
    },
}


def dumps(obj, compact: bool = False) -> str:
    """Deterministic JSON text (sorted keys, shortest round-trip floats)."""
    if compact:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True) + "\n"
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


@dataclass(frozen=True, eq=False)
class MatchFile:
    cam: dict
    proj: dict
    convexity: str
    pp_c: tuple[float, float]
    camera_size: tuple[int, int]
    projector_size: tuple[int, int]
    vertices: VertexImages | None = None
    vertex_hints: dict | None = None

    @classmethod
    def from_scene(cls, scene, with_vertices: bool = True, hints: bool = True) -> MatchFile:
        """Match file for a simulated scene.

        ``with_vertices=False`` leaves the camera-view vertices to inference,
        giving the true far vertices as hints when ``hints`` is set.
        """
        t = scene.truth
        return cls(
            cam=scene.cam, proj=scene.proj, convexity=scene.spec.convexity, pp_c=tuple(t.camera.pp),
            camera_size=tuple(t.camera_size), projector_size=tuple(t.projector_size),
            vertices=t.cam_vertices if with_vertices else None,
            vertex_hints=scene.far_vertex_hints() if (hints and not with_vertices) else None,
        )

    def face_matches(self):
        """:class:`~c2calib.transfer.FaceMatches` ready for calibration (runs inference if needed)."""
        matches, _ = build_face_matches(self.cam, self.proj, self.convexity,
                                        cam_vertices=self.vertices, hints=self.vertex_hints)
        return matches

    def to_dict(self) -> dict:
        d = {
            "version": MATCH_FILE_VERSION,
            "faces": {
                S: np.hstack([np.asarray(self.cam[S], float), np.asarray(self.proj[S], float)]).tolist()
                for S in LEGS
            },
            "convexity": self.convexity,
            "pp_c": [float(v) for v in self.pp_c],
            "image_sizes": {"camera": list(self.camera_size), "projector": list(self.projector_size)},
        }
        if self.vertices is not None:
            d["vertices"] = self.vertices.to_dict()
        if self.vertex_hints:
            d["vertex_hints"] = {
                S: (float(h) if np.ndim(h) == 0 else np.asarray(h, float).tolist())
                for S, h in self.vertex_hints.items()
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> MatchFile:
        validate_match_dict(d)
        cam, proj = {}, {}
        for S in LEGS:
            rows = np.asarray(d["faces"][S], dtype=float).reshape(-1, 4)
            cam[S], proj[S] = rows[:, :2], rows[:, 2:]
        hints = d.get("vertex_hints")
        return cls(
            cam=cam, proj=proj, convexity=d["convexity"], pp_c=tuple(d["pp_c"]),
            camera_size=tuple(d["image_sizes"]["camera"]),
            projector_size=tuple(d["image_sizes"]["projector"]),
            vertices=VertexImages.from_dict(d["vertices"]) if "vertices" in d else None,
            vertex_hints={S: (h if np.ndim(h) == 0 else np.asarray(h, float)) for S, h in hints.items()}
            if hints else None,
        )

    def dumps(self) -> str:
        return dumps(self.to_dict(), compact=True)

    def write(self, path) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def read(cls, path) -> MatchFile:
        return cls.from_dict(read_json(path))


def validate_match_dict(d: dict) -> None:
    """Schema check plus the constraints the schema cannot express.

    Raises
    ------
    InputError
        Naming the first violation.
    """
    # the schema checks structure on a few rows per face; numpy checks the rest
    probe = dict(d)
    if isinstance(d.get("faces"), dict):
        probe["faces"] = {k: v[:8] if isinstance(v, list) else v for k, v in d["faces"].items()}
    try:
        jsonschema.validate(probe, MATCH_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"match file schema error at {where}: {exc.message}") from exc
    sizes = d["image_sizes"]
    for S in LEGS:
        try:
            rows = np.array(d["faces"][S], dtype=float)
        except (TypeError, ValueError) as exc:
            raise InputError(f"face {S}: rows must be [xc, yc, xp, yp] numbers") from exc
        if rows.size == 0:
            continue
        if rows.ndim != 2 or rows.shape[1] != 4:
            raise InputError(f"face {S}: rows must be [xc, yc, xp, yp] numbers")
        if not np.isfinite(rows).all():
            raise InputError(f"face {S}: non-finite coordinates")
        for view, cols in (("camera", slice(0, 2)), ("projector", slice(2, 4))):
            w, h = sizes[view]
            x = rows[:, cols]
            if (x < 0).any() or (x[:, 0] > w).any() or (x[:, 1] > h).any():
                raise InputError(f"face {S}: {view} coordinates outside the declared {w}x{h} image")
