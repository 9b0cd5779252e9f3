"""Benchmark harness over synthetic scenes.

Each experiment calibrates a list of seeded scenes and reports signed percent
errors of ``f_c, f_p, x_p0, y_p0`` per scene plus their mean absolute value.
Three experiment modes are provided: plain accuracy, an ablation over
objective-term subsets and a match-downsampling sweep.  Sphere evaluation
scores the shape of a reconstructed sphere independently of global scale.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .c2 import LEGS
from .calibration import calibrate
from .errors import C2CalibError, FitDegenerate, InputError
from .objective import TABLE2_CONFIGS, ObjectiveConfig
from .reconstruction import reconstruct_points
from .synthetic import SceneSpec, default_sphere, generate_scene, random_scene_spec, sphere_matches

log = logging.getLogger(__name__)

QUANTITIES = ("f_c", "f_p", "x_p0", "y_p0")
TABLE3_RATES = (1, 10, 20, 100, 200, 300, 500)


@dataclass(frozen=True)
class BenchSettings:
    """How scenes are drawn and calibrated.

    ``infer`` switches from true camera-view vertex images to vertices
    inferred from the face homographies (with true far-vertex hints).
    """

    sigma: float = 0.5
    samples_per_face: int = 500
    occlusion: float = 0.0
    infer: bool = False
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    sphere: bool = False
    sphere_points: int = 2000
    jobs: int = 1

    def specs(self, seeds) -> list[SceneSpec]:
        return [
            random_scene_spec(int(s), sigma=self.sigma, samples_per_face=self.samples_per_face,
                              occlusion=self.occlusion)
            for s in seeds
        ]


@dataclass(frozen=True)
class SceneResult:
    seed: int
    errors: dict | None
    flags: tuple[str, ...] = ()
    status: str = "ok"
    sphere_mae: float | None = None
    runtime: float = 0.0

    @property
    def mae(self) -> float:
        return math.nan if self.errors is None else self.errors["MAE"]


@dataclass(frozen=True)
class BenchReport:
    """Per-scene results of one experiment cell, in seed order."""

    rows: tuple[SceneResult, ...]
    label: str = ""

    @property
    def ok_rows(self) -> list[SceneResult]:
        return [r for r in self.rows if r.errors is not None]

    @property
    def mae(self) -> float:
        """Mean absolute error over every quantity of every successful scene."""
        ok = self.ok_rows
        if not ok:
            return math.nan
        return float(np.mean([abs(r.errors[q]) for r in ok for q in QUANTITIES]))

    @property
    def median_mae(self) -> float:
        ok = self.ok_rows
        return float(np.median([r.mae for r in ok])) if ok else math.nan

    @property
    def n_failed(self) -> int:
        return len(self.rows) - len(self.ok_rows)

    @property
    def runtime(self) -> float:
        return float(sum(r.runtime for r in self.rows))

    def to_dict(self, timing: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = {"seed": r.seed, "errors": r.errors, "flags": list(r.flags), "status": r.status}
            if r.sphere_mae is not None:
                d["sphere_mae"] = r.sphere_mae
            if timing:
                d["runtime_s"] = r.runtime
            rows.append(d)
        out = {"label": self.label, "MAE": self.mae, "median_MAE": self.median_mae,
               "failed": self.n_failed, "scenes": rows}
        if timing:
            out["runtime_s"] = self.runtime
        return out

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", *QUANTITIES, "MAE", "flags", "status"])
            for r in self.rows:
                e = r.errors or {}
                w.writerow([r.seed, *(repr(e[q]) if q in e else "" for q in QUANTITIES),
                            repr(r.mae), ";".join(r.flags), r.status])


def calibrate_spec(spec: SceneSpec, settings: BenchSettings, objective: ObjectiveConfig | None = None,
                   rate: int = 1, scene_id: int | None = None) -> SceneResult:
    """Generate, calibrate and score one scene; failures become a status string.

    ``scene_id`` labels the result row (defaults to ``spec.seed``).
    """
    scene_id = spec.seed if scene_id is None else scene_id
    t0 = time.perf_counter()
    try:
        scene = generate_scene(spec)
        matches = scene.face_matches(infer=settings.infer)
        if rate > 1:
            matches = matches.downsample(rate)
        report = calibrate(matches, scene.pp_c, objective or settings.objective)
        report = report.with_ground_truth(spec.camera, spec.projector)
        sphere_mae = None
        if settings.sphere:
            center, radius = default_sphere(spec)
            xc, xp, _ = sphere_matches(spec, center, radius, settings.sphere_points, seed=spec.seed)
            sphere_mae = evaluate_sphere(report, xc, xp, radius).mae
        return SceneResult(scene_id, report.errors, report.flags, "ok", sphere_mae,
                           time.perf_counter() - t0)
    except C2CalibError as exc:
        log.info("scene %d failed: %s", scene_id, exc)
        return SceneResult(scene_id, None, (), f"{type(exc).__name__}: {exc}", None,
                           time.perf_counter() - t0)


def _run(specs, fn, jobs: int) -> list:
    call = lambda item: fn(item[1], item[0])  # noqa: E731
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(call, specs))
    return [call(s) for s in specs]


def _as_specs(scenes, settings: BenchSettings) -> list[tuple[int, SceneSpec]]:
    """``(scene id, spec)`` pairs; integer seeds are their own ids."""
    scenes = list(scenes)
    if scenes and not isinstance(scenes[0], SceneSpec):
        return list(zip(map(int, scenes), settings.specs(scenes)))
    return [(s.seed, s) for s in scenes]


def run_table1(scenes, settings: BenchSettings | None = None) -> BenchReport:
    """Accuracy of the full objective on each scene (seeds or specs)."""
    settings = settings or BenchSettings()
    specs = _as_specs(scenes, settings)
    rows = _run(specs, lambda s, i: calibrate_spec(s, settings, scene_id=i), settings.jobs)
    return BenchReport(tuple(rows), "full objective")


def run_ablation_table2(scenes, settings: BenchSettings | None = None,
                        configs: dict | None = None) -> dict[int, BenchReport]:
    """One :class:`BenchReport` per objective-term subset."""
    settings = settings or BenchSettings()
    configs = configs or TABLE2_CONFIGS
    specs = _as_specs(scenes, settings)
    if len(specs) < 4:
        log.warning("ablation over %d scenes; at least 4 are recommended", len(specs))
    out = {}
    for key, terms in configs.items():
        cfg = replace(settings.objective, term_mask=ObjectiveConfig.from_terms(terms).term_mask)
        rows = _run(specs, lambda s, i: calibrate_spec(s, settings, cfg, scene_id=i), settings.jobs)
        out[key] = BenchReport(tuple(rows), "terms " + ",".join(map(str, terms)))
    return out


def run_downsampling_table3(scenes, settings: BenchSettings | None = None,
                            rates=TABLE3_RATES) -> dict[int, BenchReport]:
    """One :class:`BenchReport` per downsampling rate (every ``rate``-th match kept).

    Raises
    ------
    InputError
        A rate leaves some face with fewer than 4 matches.
    """
    settings = settings or BenchSettings()
    specs = _as_specs(scenes, settings)
    for rate in rates:
        for i, spec in specs:
            kept = -(-spec.samples_per_face // int(rate))
            if kept < 4:
                raise InputError(
                    f"rate {rate} leaves {kept} matches per face (scene {i}); at least 4 needed"
                )
    out = {}
    for rate in rates:
        rows = _run(specs, lambda s, i: calibrate_spec(s, settings, rate=int(rate), scene_id=i), settings.jobs)
        out[int(rate)] = BenchReport(tuple(rows), f"rate {rate}")
    if spread_flags(out):
        log.warning("MAE spread across rates is %.3f points (> %g)", mae_spread(out), SPREAD_LIMIT)
    return out


SPREAD_LIMIT = 1.0


def mae_spread(tables: dict[int, BenchReport]) -> float:
    """Largest minus smallest MAE across cells (percentage points)."""
    vals = [t.mae for t in tables.values()]
    return float(max(vals) - min(vals))


def spread_flags(tables: dict[int, BenchReport], limit: float = SPREAD_LIMIT) -> tuple[str, ...]:
    """``("unstable_spread",)`` when the MAE spread exceeds ``limit`` points."""
    return ("unstable_spread",) if mae_spread(tables) > limit else ()


def write_table_csv(path, tables: dict, key_name: str) -> None:
    """Summary table: one row per cell with its MAE and failure count."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key_name, "label", "MAE", "median_MAE", "failed"])
        for key, t in tables.items():
            w.writerow([key, t.label, repr(t.mae), repr(t.median_mae), t.n_failed])


# -- sphere evaluation -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SphereEvaluation:
    """Sphere fit to a reconstruction, with scale-free radial residuals.

    ``scale`` maps reconstruction units to ground-truth units (true radius
    over fitted radius); ``residuals`` are signed radial distances in
    ground-truth units after that scaling.
    """

    center: np.ndarray
    radius: float
    scale: float
    residuals: np.ndarray

    @property
    def mae(self) -> float:
        return float(np.mean(np.abs(self.residuals)))


def fit_sphere(X: np.ndarray, min_coverage: float = 0.1) -> tuple[np.ndarray, float]:
    """Least-squares sphere (centre, radius): algebraic fit refined geometrically.

    Raises
    ------
    FitDegenerate
        Fewer than 4 points, or the points cover less than ``min_coverage``
        of the sphere (measured as ``1 - |mean unit normal|``, which equals
        the area fraction of a spherical cap).
    """
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    if len(X) < 4:
        raise FitDegenerate(f"need at least 4 points to fit a sphere, got {len(X)}")
    A = np.hstack([2 * X, np.ones((len(X), 1))])
    b = np.sum(X * X, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    c0 = sol[:3]
    r0 = math.sqrt(max(sol[3] + c0 @ c0, 0.0))
    if not np.isfinite(r0) or r0 == 0:
        raise FitDegenerate("algebraic sphere fit failed")
    res = least_squares(lambda p: np.linalg.norm(X - p[:3], axis=1) - p[3], np.r_[c0, r0],
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    c, r = res.x[:3], float(abs(res.x[3]))
    n = (X - c) / np.linalg.norm(X - c, axis=1, keepdims=True)
    coverage = 1.0 - np.linalg.norm(n.mean(axis=0))
    if coverage < min_coverage:
        raise FitDegenerate(f"points cover {coverage:.1%} of the sphere (< {min_coverage:.0%})")
    return c, r


def evaluate_sphere(report, cam: np.ndarray, proj: np.ndarray, radius_gt: float) -> SphereEvaluation:
    """Triangulate sphere matches with ``report`` and score the fitted shape."""
    cloud = reconstruct_points(report, cam, proj)
    c, r = fit_sphere(cloud.points)
    scale = radius_gt / r
    resid = scale * (np.linalg.norm(cloud.points - c, axis=1) - r)
    return SphereEvaluation(c, r, scale, resid)


def face_residuals(cloud, c2_gt, scale: float) -> np.ndarray:
    """Distances of scaled face points to the true face planes (scene units)."""
    out = []
    for S in LEGS:
        n, d = c2_gt.face_plane(S)
        X = scale * cloud.face(S)
        out.append((X @ n + d) / np.linalg.norm(n))
    return np.concatenate(out)
