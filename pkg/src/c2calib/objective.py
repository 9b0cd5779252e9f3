"""Cycle-consistency objective over the camera focal length and its minimisers.

For a trial camera focal length ``f_c`` the transfer chain is run forward to
the projector and back.  Seven absolute pixel-unit terms measure how far the
result is from a natural projector and from reproducing the trial camera:

=====  ==========================================
E_1    ``|skew_p|``
E_2    ``|fx_p - fy_p|``
E_3    ``|fx_c' - fy_c'|``
E_4    ``|skew_c'|``
E_5    ``|fx_c' - f_c|``
E_6    ``|fy_c' - f_c|``
E_7    ``||pp_c' - pp_c||`` (Euclidean)
=====  ==========================================

where primes denote the camera intrinsics recovered by the backward pass.
The objective is the sum of the enabled terms; it is a function of one
variable and is minimised by exhaustive grid search or by a coarse grid
followed by bounded scalar minimisation.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import AllEvaluationsFailed, C2CalibError
from .transfer import FaceMatches, TransferResult, cycle_transfers

log = logging.getLogger(__name__)

N_TERMS = 7
TERM_NAMES = tuple(f"E_{i}" for i in range(1, N_TERMS + 1))
OPTIMIZERS = ("grid", "bounded-1d", "grid-then-refine")

# term subsets of the ablation study, keyed by configuration number
TABLE2_CONFIGS = {
    **{i: (i,) for i in range(1, 8)},
    8: (1, 2),
    9: (3, 4, 5, 6, 7),
    10: (1, 2, 3, 4, 5, 6, 7),
}

# stand-in for +inf inside the scalar minimiser
_PENALTY = 1e12
# another coarse basin within this factor of the optimum is reported as competing
COMPETING_BASIN_FACTOR = 4.0


def terms_to_mask(terms) -> tuple[bool, ...]:
    """``(1, 2)`` -> mask enabling E_1 and E_2."""
    terms = set(int(t) for t in terms)
    bad = terms - set(range(1, N_TERMS + 1))
    if bad:
        raise ValueError(f"term indices must be in 1..{N_TERMS}, got {sorted(bad)}")
    return tuple(i in terms for i in range(1, N_TERMS + 1))


@dataclass(frozen=True)
class ObjectiveConfig:
    """Objective terms and search settings.

    Parameters
    ----------
    term_mask
        Seven booleans enabling E_1..E_7.
    f_range
        Search interval for the camera focal length (pixels).
    grid_step
        Spacing of the exhaustive grid.
    optimizer
        ``"grid"``, ``"bounded-1d"`` or ``"grid-then-refine"``.
    coarse_step
        Spacing of the bracketing grid used by the bounded optimiser.
    xtol
        Absolute focal-length tolerance of the bounded optimiser.
    jobs
        Worker threads for grid evaluation.
    """

    term_mask: tuple[bool, ...] = (True,) * N_TERMS
    f_range: tuple[float, float] = (100.0, 10000.0)
    grid_step: float = 1.0
    optimizer: str = "bounded-1d"
    coarse_step: float = 50.0
    xtol: float = 0.01
    jobs: int = 1

    def __post_init__(self):
        mask = tuple(bool(b) for b in self.term_mask)
        if len(mask) != N_TERMS:
            raise ValueError(f"term_mask needs {N_TERMS} entries")
        if not any(mask):
            raise ValueError("at least one objective term must be enabled")
        lo, hi = (float(v) for v in self.f_range)
        if not 0 < lo < hi:
            raise ValueError(f"f_range must satisfy 0 < f_min < f_max, got {self.f_range}")
        if not self.grid_step > 0 or not self.coarse_step > 0 or not self.xtol > 0:
            raise ValueError("grid_step, coarse_step and xtol must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        object.__setattr__(self, "term_mask", mask)
        object.__setattr__(self, "f_range", (lo, hi))

    @classmethod
    def from_terms(cls, terms, **kw) -> ObjectiveConfig:
        return cls(term_mask=terms_to_mask(terms), **kw)

    @classmethod
    def table2(cls, config: int, **kw) -> ObjectiveConfig:
        return cls.from_terms(TABLE2_CONFIGS[config], **kw)

    @property
    def terms(self) -> tuple[int, ...]:
        return tuple(i + 1 for i, on in enumerate(self.term_mask) if on)

    def to_dict(self) -> dict:
        return {
            "terms": list(self.terms),
            "f_range": list(self.f_range),
            "grid_step": self.grid_step,
            "optimizer": self.optimizer,
            "coarse_step": self.coarse_step,
            "xtol": self.xtol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ObjectiveConfig:
        d = dict(d)
        terms = d.pop("terms", range(1, N_TERMS + 1))
        if "f_range" in d:
            d["f_range"] = tuple(d["f_range"])
        return cls.from_terms(terms, **d)


class ObjectiveValue(NamedTuple):
    E: float
    terms: np.ndarray
    """All seven terms, whether enabled or not (``inf`` on failure)."""
    status: str
    """``"ok"`` or the reason the chain failed."""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def cycle_terms(fwd: TransferResult, bwd: TransferResult, f_c: float, pp_c) -> np.ndarray:
    Kp, Kc = fwd.K_target, bwd.K_target
    return np.array([
        abs(Kp.skew),
        abs(Kp.fx - Kp.fy),
        abs(Kc.fx - Kc.fy),
        abs(Kc.skew),
        abs(Kc.fx - f_c),
        abs(Kc.fy - f_c),
        math.hypot(Kc.pp[0] - pp_c[0], Kc.pp[1] - pp_c[1]),
    ])


def _failed(reason: str) -> ObjectiveValue:
    return ObjectiveValue(math.inf, np.full(N_TERMS, math.inf), reason)


def evaluate_objective(f_c: float, matches: FaceMatches, pp_c,
                       cfg: ObjectiveConfig | None = None) -> ObjectiveValue:
    """Objective at one trial focal length; never raises on chain failure."""
    cfg = cfg or ObjectiveConfig()
    try:
        fwd, bwd = cycle_transfers(float(f_c), pp_c, matches)
    except (C2CalibError, np.linalg.LinAlgError, ValueError) as exc:
        return _failed(f"{type(exc).__name__}: {exc}")
    t = cycle_terms(fwd, bwd, f_c, pp_c)
    if not np.all(np.isfinite(t)):
        return _failed("non-finite intrinsics from the transfer chain")
    return ObjectiveValue(float(t[np.array(cfg.term_mask)].sum()), t, "ok")


@dataclass(frozen=True, eq=False)
class ObjectiveCurve:
    """Objective samples in evaluation order (grid order for grid searches)."""

    f: np.ndarray
    E: np.ndarray
    terms: np.ndarray
    status: tuple[str, ...]
    f_range: tuple[float, float] = field(default=(math.nan, math.nan))

    @classmethod
    def from_values(cls, fs, values, f_range=(math.nan, math.nan)) -> ObjectiveCurve:
        values = list(values)
        return cls(
            f=np.asarray(fs, dtype=float),
            E=np.array([v.E for v in values]),
            terms=np.array([v.terms for v in values]).reshape(-1, N_TERMS),
            status=tuple(v.status for v in values),
            f_range=tuple(f_range),
        )

    def __len__(self) -> int:
        return len(self.f)

    @property
    def n_failed(self) -> int:
        return int(np.sum(~np.isfinite(self.E)))

    @property
    def argmin(self) -> int:
        """Index of the smallest finite sample; ties go to the smallest ``f``."""
        finite = np.isfinite(self.E)
        if not finite.any():
            raise AllEvaluationsFailed("every objective evaluation failed")
        best = self.E[finite].min()
        idx = np.flatnonzero(finite & (self.E == best))
        return int(idx[np.argmin(self.f[idx])])

    @property
    def f_min(self) -> float:
        return float(self.f[self.argmin])

    @property
    def at_boundary(self) -> bool:
        """Minimum sits on an end of the searched interval."""
        f = self.f_min
        return bool(f <= self.f.min() or f >= self.f.max())

    def local_minima(self) -> list[int]:
        """Indices of finite samples not exceeded by their finite neighbours."""
        order = np.argsort(self.f, kind="stable")
        E = self.E[order]
        out = []
        for k in range(len(E)):
            if not np.isfinite(E[k]):
                continue
            left = E[k - 1] if k > 0 else math.inf
            right = E[k + 1] if k + 1 < len(E) else math.inf
            if E[k] <= left and E[k] <= right:
                out.append(int(order[k]))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["f_c", "E", *TERM_NAMES, "status"])
            for f, E, t, s in zip(self.f, self.E, self.terms, self.status):
                w.writerow([repr(float(f)), repr(float(E)), *(repr(float(v)) for v in t), s])

    @classmethod
    def from_csv(cls, path) -> ObjectiveCurve:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        f = np.array([float(r["f_c"]) for r in rows])
        return cls(
            f=f,
            E=np.array([float(r["E"]) for r in rows]),
            terms=np.array([[float(r[n]) for n in TERM_NAMES] for r in rows]).reshape(-1, N_TERMS),
            status=tuple(r["status"] for r in rows),
            f_range=(float(f.min()), float(f.max())) if len(f) else (math.nan, math.nan),
        )


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def evaluate_curve(fs, matches: FaceMatches, pp_c, cfg: ObjectiveConfig) -> ObjectiveCurve:
    """Evaluate the objective at every ``f`` in ``fs``, in order."""
    fs = np.asarray(fs, dtype=float)

    def one(f):
        return evaluate_objective(f, matches, pp_c, cfg)

    if cfg.jobs > 1 and len(fs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            values = list(pool.map(one, fs))
    else:
        values = [one(f) for f in fs]
    return ObjectiveCurve.from_values(fs, values, cfg.f_range)


def grid_search(matches: FaceMatches, pp_c, cfg: ObjectiveConfig | None = None,
                step: float | None = None) -> tuple[float, ObjectiveCurve]:
    """Exhaustive search on ``{f_min, f_min + step, ...} <= f_max``.

    Raises
    ------
    AllEvaluationsFailed
        Every grid point failed.
    """
    cfg = cfg or ObjectiveConfig()
    curve = evaluate_curve(_grid(*cfg.f_range, step or cfg.grid_step), matches, pp_c, cfg)
    f = curve.f_min
    if curve.at_boundary:
        log.warning("objective minimum at the search boundary f_c=%g", f)
    return f, curve


def _refine(matches, pp_c, cfg: ObjectiveConfig, lo: float, hi: float, f0: float, E0: float) -> tuple[float, float]:
    """Bounded scalar minimisation on ``[lo, hi]``; never worse than ``(f0, E0)``."""
    if hi - lo <= cfg.xtol:
        return 0.5 * (lo + hi), math.nan

    def fun(f):
        E = evaluate_objective(f, matches, pp_c, cfg).E
        return E if math.isfinite(E) else _PENALTY

    r = minimize_scalar(fun, bounds=(lo, hi), method="bounded", options={"xatol": cfg.xtol})
    if math.isfinite(r.fun) and r.fun < _PENALTY and r.fun <= E0:
        return float(r.x), float(r.fun)
    return f0, E0


def bounded_minimize(matches: FaceMatches, pp_c, cfg: ObjectiveConfig | None = None) -> tuple[float, ObjectiveCurve]:
    """Coarse bracketing grid followed by bounded Brent minimisation.

    The coarse grid (``cfg.coarse_step``) locates the best basin; the
    minimiser is confined to the two neighbouring coarse intervals so that it
    cannot wander into a different basin.  Returns the minimiser and the
    coarse curve.
    """
    cfg = cfg or ObjectiveConfig()
    lo, hi = cfg.f_range
    if hi - lo <= cfg.xtol:
        f = 0.5 * (lo + hi)
        v = evaluate_objective(f, matches, pp_c, cfg)
        if not v.ok:
            raise AllEvaluationsFailed(f"objective failed at the only admissible f_c={f:g}: {v.status}")
        return f, ObjectiveCurve.from_values([f], [v], cfg.f_range)
    fs = _grid(lo, hi, cfg.coarse_step)
    if fs[-1] < hi:
        fs = np.append(fs, hi)
    curve = evaluate_curve(fs, matches, pp_c, cfg)
    i = curve.argmin
    a = fs[max(i - 1, 0)]
    b = fs[min(i + 1, len(fs) - 1)]
    f, _ = _refine(matches, pp_c, cfg, a, b, float(fs[i]), float(curve.E[i]))
    return f, curve


class OptimizationResult(NamedTuple):
    f_c: float
    value: ObjectiveValue
    curve: ObjectiveCurve
    flags: tuple[str, ...]


def minimize_objective(matches: FaceMatches, pp_c, cfg: ObjectiveConfig | None = None) -> OptimizationResult:
    """Run the optimiser selected in ``cfg`` and collect quality flags.

    Flags: ``"boundary"`` when the minimum sits on an end of ``f_range``;
    ``"competing_basin"`` when another local minimum of the searched curve
    is within :data:`COMPETING_BASIN_FACTOR` of the optimum, i.e. the scene
    is close to ambiguous.
    """
    cfg = cfg or ObjectiveConfig()
    if cfg.optimizer == "grid":
        f, curve = grid_search(matches, pp_c, cfg)
    elif cfg.optimizer == "bounded-1d":
        f, curve = bounded_minimize(matches, pp_c, cfg)
    else:
        f, curve = grid_search(matches, pp_c, cfg)
        i = curve.argmin
        lo = max(cfg.f_range[0], f - cfg.grid_step)
        hi = min(cfg.f_range[1], f + cfg.grid_step)
        f, _ = _refine(matches, pp_c, cfg, lo, hi, f, float(curve.E[i]))
    value = evaluate_objective(f, matches, pp_c, cfg)
    flags = []
    if len(curve) > 1 and curve.at_boundary and abs(f - curve.f_min) <= max(cfg.grid_step, cfg.coarse_step):
        flags.append("boundary")
    if _has_competing_basin(curve, f, value.E, cfg):
        flags.append("competing_basin")
    return OptimizationResult(f, value, curve, tuple(flags))


def _has_competing_basin(curve: ObjectiveCurve, f: float, E: float, cfg: ObjectiveConfig) -> bool:
    # minima in the optimum's own neighbourhood belong to its basin
    near = max(2 * cfg.coarse_step if cfg.optimizer == "bounded-1d" else 2 * cfg.grid_step, 0.05 * f)
    for i in curve.local_minima():
        if abs(curve.f[i] - f) > near and curve.E[i] <= COMPETING_BASIN_FACTOR * E:
            return True
    return False
