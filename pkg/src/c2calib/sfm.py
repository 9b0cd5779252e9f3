"""Two-view calibration of one unknown camera used for both views.

The transfer chain runs unchanged between the two views.  Since both views
share the intrinsics, the guess ``K = natural(f, pp)`` is checked against
the naturalised intrinsics the forward transfer assigns to the second view,
in addition to the cycle terms of the camera-projector objective.  No
principal-point prior is needed, so ``(f, x0, y0)`` are searched jointly.

The objective used here (``E_const``) is this package's formulation; see
:func:`evaluate_sfm_objective`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import product

import numpy as np
from scipy.optimize import minimize_scalar

from .c2 import LEGS, VertexImages
from .errors import AllEvaluationsFailed, C2CalibError
from .geometry import Intrinsics
from .objective import cycle_terms
from .report import CalibrationReport
from .transfer import BACKWARD, FORWARD, FaceMatches, transfer

MODE = "two-view constant camera (E_const)"
_PENALTY = 1e12


@dataclass(frozen=True)
class SfmConfig:
    """Search space and input cropping for constant-camera calibration.

    Parameters
    ----------
    image_size
        ``(width, height)`` of the uncropped images.
    f_range
        Focal length search interval (pixels).
    pp_range
        ``((x_lo, x_hi), (y_lo, y_hi))`` principal-point search box in
        cropped-image pixels; defaults to the whole cropped image.
    pp_fixed
        Fix the principal point to the cropped image centre and search
        ``f`` only.
    crop_offset
        Shift ``(dx, dy) <= 0`` added to pixel coordinates of both views;
        cropping ``k`` columns off the left edge is ``dx = -k``.  Matches
        falling outside the cropped image are dropped.
    f_steps, pp_steps
        Coarse grid resolution in ``f`` and per principal-point axis.
    sweeps
        Minimum number of coordinate-descent sweeps after the grid.
    max_sweeps
        Sweeps continue past ``sweeps`` until no coordinate moves more than
        ``xtol``, up to this many.
    """

    image_size: tuple[int, int] = (2448, 2048)
    f_range: tuple[float, float] = (100.0, 10000.0)
    pp_range: tuple | None = None
    pp_fixed: bool = False
    crop_offset: tuple[float, float] = (0.0, 0.0)
    f_steps: int = 20
    pp_steps: int = 9
    sweeps: int = 3
    max_sweeps: int = 50
    xtol: float = 0.01

    def __post_init__(self):
        lo, hi = self.f_range
        if not 0 < lo < hi:
            raise ValueError("f_range must satisfy 0 < f_min < f_max")
        if any(o > 0 for o in self.crop_offset):
            raise ValueError("crop offsets must be <= 0 (pixels removed from the left/top)")
        w, h = self.cropped_size
        if w <= 0 or h <= 0:
            raise ValueError("crop removes the whole image")
        if self.pp_range is not None:
            (a, b), (c, d) = self.pp_range
            if not (a <= b and c <= d):
                raise ValueError("pp_range must be non-empty")
        if self.f_steps < 2 or self.pp_steps < 1 or self.sweeps < 0 or self.max_sweeps < self.sweeps:
            raise ValueError("invalid grid or sweep counts")

    @property
    def cropped_size(self) -> tuple[float, float]:
        return (self.image_size[0] + self.crop_offset[0], self.image_size[1] + self.crop_offset[1])

    @property
    def pp_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        if self.pp_range is not None:
            return tuple(tuple(map(float, r)) for r in self.pp_range)
        w, h = self.cropped_size
        return (0.0, float(w)), (0.0, float(h))

    def replace(self, **kw) -> SfmConfig:
        return replace(self, **kw)


def crop_matches(matches: FaceMatches, offset, size) -> FaceMatches:
    """Shift both views by ``offset`` and drop matches outside ``size`` in either view."""
    off = np.asarray(offset, dtype=float)
    w, h = size
    cam, proj = {}, {}
    for S in LEGS:
        a = matches.cam[S] + off
        b = matches.proj[S] + off
        keep = np.ones(len(a), dtype=bool)
        for x in (a, b):
            keep &= (x[:, 0] >= 0) & (x[:, 0] <= w) & (x[:, 1] >= 0) & (x[:, 1] <= h)
        cam[S], proj[S] = a[keep], b[keep]
    shift = lambda v: VertexImages.from_array(v.as_array() + off)  # noqa: E731
    return FaceMatches(cam, proj, shift(matches.cam_vertices), shift(matches.proj_vertices), matches.convexity)


def sfm_terms(K_guess: Intrinsics, matches: FaceMatches) -> np.ndarray:
    """Terms of ``E_const`` (raises on chain failure).

    In order: ``|fx_t - fy_t|``, ``|skew_t|``, ``|f_t - f|``, ``|x0_t - x0|``,
    ``|y0_t - y0|`` for the naturalised forward target ``t``, then the five
    backward cycle terms E_3..E_7 against the guess.
    """
    fwd = transfer(K_guess, matches, FORWARD)
    Kt = fwd.K_target
    nat = Kt.naturalized()
    bwd = transfer(nat, matches, BACKWARD)
    cyc = cycle_terms(fwd, bwd, K_guess.f, K_guess.pp)
    return np.array([
        abs(Kt.fx - Kt.fy),
        abs(Kt.skew),
        abs(nat.f - K_guess.f),
        abs(nat.pp[0] - K_guess.pp[0]),
        abs(nat.pp[1] - K_guess.pp[1]),
        *cyc[2:],
    ])


def evaluate_sfm_objective(K_guess: Intrinsics, matches: FaceMatches) -> float:
    """``E_const``: zero when the transfer returns the guessed natural camera.

    Returns ``inf`` if the transfer chain fails.
    """
    try:
        t = sfm_terms(K_guess, matches)
    except (C2CalibError, np.linalg.LinAlgError, ValueError):
        return math.inf
    s = float(t.sum())
    return s if math.isfinite(s) else math.inf


@dataclass(frozen=True)
class SfmSearch:
    f: float
    pp: tuple[float, float]
    E: float
    evaluations: int
    sweeps: int


def search_sfm(matches: FaceMatches, cfg: SfmConfig) -> SfmSearch:
    """Coarse ``(f, x0, y0)`` grid, then cyclic bounded 1-D refinement."""
    (xlo, xhi), (ylo, yhi) = cfg.pp_box
    fs = np.linspace(*cfg.f_range, cfg.f_steps)
    if cfg.pp_fixed:
        xs, ys = np.array([(xlo + xhi) / 2]), np.array([(ylo + yhi) / 2])
    else:
        xs, ys = np.linspace(xlo, xhi, cfg.pp_steps), np.linspace(ylo, yhi, cfg.pp_steps)
    n_eval = 0

    def E(p):
        nonlocal n_eval
        n_eval += 1
        return evaluate_sfm_objective(Intrinsics(p[0], (p[1], p[2])), matches)

    best, best_E = None, math.inf
    for p in product(fs, xs, ys):
        e = E(p)
        if e < best_E:
            best, best_E = np.array(p, dtype=float), e
    if best is None:
        raise AllEvaluationsFailed("E_const failed at every grid point")

    steps = [fs[1] - fs[0], (xs[1] - xs[0]) if len(xs) > 1 else 0.0, (ys[1] - ys[0]) if len(ys) > 1 else 0.0]
    bounds = [cfg.f_range, (xlo, xhi), (ylo, yhi)]
    coords = [0] if cfg.pp_fixed else [0, 1, 2]
    sweep = 0
    while sweep < cfg.max_sweeps:
        sweep += 1
        moved = 0.0
        for k in coords:
            lo = max(bounds[k][0], best[k] - steps[k])
            hi = min(bounds[k][1], best[k] + steps[k])
            if hi - lo <= cfg.xtol:
                continue

            def fun(v, k=k):
                p = best.copy()
                p[k] = v
                e = E(p)
                return e if math.isfinite(e) else _PENALTY

            r = minimize_scalar(fun, bounds=(lo, hi), method="bounded", options={"xatol": cfg.xtol})
            if r.fun < best_E:
                moved = max(moved, abs(r.x - best[k]))
                best[k], best_E = r.x, float(r.fun)
        if sweep >= cfg.sweeps and moved <= cfg.xtol:
            break
    return SfmSearch(float(best[0]), (float(best[1]), float(best[2])), best_E, n_eval, sweep)


def calibrate_sfm(matches: FaceMatches, cfg: SfmConfig | None = None) -> CalibrationReport:
    """Estimate the shared intrinsics and the relative pose of two views.

    Cropping in ``cfg`` is applied to ``matches`` first; all reported pixel
    quantities are in cropped-image coordinates.
    """
    cfg = cfg or SfmConfig()
    if any(cfg.crop_offset):
        matches = crop_matches(matches, cfg.crop_offset, cfg.cropped_size)
    res = search_sfm(matches, cfg)
    K = Intrinsics(res.f, res.pp)
    fwd = transfer(K, matches, FORWARD)
    bwd = transfer(fwd.K_target.naturalized(), matches, BACKWARD)
    terms = sfm_terms(K, matches)
    return CalibrationReport(
        camera=K,
        projector=fwd.K_target.naturalized(),
        projector_full=fwd.K_target,
        pose=fwd.pose,
        c2=fwd.c2,
        objective=float(terms.sum()),
        terms=tuple(float(t) for t in terms),
        objective_config={
            "f_range": list(cfg.f_range),
            "pp_box": [list(r) for r in cfg.pp_box],
            "pp_fixed": cfg.pp_fixed,
            "crop_offset": list(cfg.crop_offset),
            "grid": [cfg.f_steps, cfg.pp_steps, cfg.pp_steps],
            "sweeps": res.sweeps,
        },
        reprojection={"forward_mean_px": fwd.mean_reprojection, "backward_mean_px": bwd.mean_reprojection},
        mode=MODE,
        quality={"evaluations": res.evaluations, "match_counts": matches.counts()},
    )
