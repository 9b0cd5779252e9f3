"""End-to-end self-calibration: 1-D search over ``f_c`` then one final transfer."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Intrinsics
from .objective import ObjectiveConfig, OptimizationResult, cycle_terms, minimize_objective
from .report import CalibrationReport
from .transfer import BACKWARD, FORWARD, FaceMatches, transfer


def finalize_calibration(f_c: float, matches: FaceMatches, pp_c, cfg: ObjectiveConfig | None = None,
                         result: OptimizationResult | None = None) -> CalibrationReport:
    """Recover projector intrinsics, pose and corner at the chosen ``f_c``."""
    if not math.isfinite(f_c) or f_c <= 0:
        raise ValueError(f"focal length must be finite and positive, got {f_c}")
    cfg = cfg or ObjectiveConfig()
    pp_c = (float(pp_c[0]), float(pp_c[1]))
    K_c = Intrinsics(float(f_c), pp_c)
    fwd = transfer(K_c, matches, FORWARD)
    bwd = transfer(fwd.K_target.naturalized(), matches, BACKWARD)
    terms = cycle_terms(fwd, bwd, f_c, pp_c)
    quality = {"match_counts": matches.counts()}
    if result is not None:
        quality["failed_evaluations"] = result.curve.n_failed
        quality["evaluations"] = len(result.curve)
    return CalibrationReport(
        camera=K_c,
        projector=fwd.K_target.naturalized(),
        projector_full=fwd.K_target,
        pose=fwd.pose,
        c2=fwd.c2,
        objective=float(terms[np.array(cfg.term_mask)].sum()),
        terms=tuple(float(t) for t in terms),
        objective_config=cfg.to_dict(),
        reprojection={"forward_mean_px": fwd.mean_reprojection, "backward_mean_px": bwd.mean_reprojection},
        flags=() if result is None else result.flags,
        quality=quality,
    )


def calibrate(matches: FaceMatches, pp_c, cfg: ObjectiveConfig | None = None) -> CalibrationReport:
    """Estimate both devices' intrinsics from face matches and the camera PP.

    Raises
    ------
    AllEvaluationsFailed
        The transfer chain failed at every trial focal length.
    """
    cfg = cfg or ObjectiveConfig()
    result = minimize_objective(matches, pp_c, cfg)
    return finalize_calibration(result.f_c, matches, pp_c, cfg, result)
