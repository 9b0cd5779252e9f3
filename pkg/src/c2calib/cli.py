"""Command-line interface: ``c2calib <command> ...``.

Exit codes: 0 success, 1 input or schema error, 2 degenerate geometry,
3 optimisation failure.  Set ``C2CALIB_LOG`` (e.g. ``info``, ``debug``) for
log output on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .c2 import LEGS
from .calibration import finalize_calibration
from .errors import C2CalibError, InputError
from .geometry import Intrinsics
from .io import MatchFile, atomic_write, dumps, read_json
from .objective import OPTIMIZERS, ObjectiveConfig, grid_search, minimize_objective
from .reconstruction import reconstruct, write_ply
from .report import CalibrationReport
from .sfm import SfmConfig, calibrate_sfm
from .synthetic import SceneSpec, default_sphere, generate_scene, random_scene_spec, sphere_matches, two_view_spec

log = logging.getLogger("c2calib")


def _terms(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad term list {text!r}") from exc


def _objective_config(args) -> ObjectiveConfig:
    kw = {}
    if args.f_range is not None:
        kw["f_range"] = tuple(args.f_range)
    if args.grid_step is not None:
        kw["grid_step"] = args.grid_step
    if getattr(args, "optimizer", None) is not None:
        kw["optimizer"] = args.optimizer
    if getattr(args, "jobs", None):
        kw["jobs"] = args.jobs
    return ObjectiveConfig.from_terms(args.terms or range(1, 8), **kw)


def _add_objective_flags(p, optimizer: bool = True):
    p.add_argument("--f-range", nargs=2, type=float, metavar=("F_MIN", "F_MAX"))
    p.add_argument("--grid-step", type=float)
    p.add_argument("--terms", type=_terms, help="comma-separated objective terms, e.g. 1,2")
    if optimizer:
        p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--jobs", type=int, default=1)


# -- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.spec:
        try:
            spec = SceneSpec.from_dict(read_json(args.spec))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.spec}: invalid scene spec: {exc}") from exc
    else:
        make = two_view_spec if args.two_view else random_scene_spec
        spec = make(args.seed, sigma=args.sigma, samples_per_face=args.samples_per_face,
                    occlusion=args.occlusion)
    scene = generate_scene(spec)
    out = Path(args.out_dir)
    mf = MatchFile.from_scene(scene, with_vertices=not args.infer_vertices)
    mf.write(out / "matches.json")
    truth = {"spec": spec.to_dict(), "truth": scene.truth.to_dict()}
    atomic_write(out / "truth.json", dumps(truth))
    if args.sphere:
        center, radius = default_sphere(spec)
        xc, xp, X = sphere_matches(spec, center, radius, args.sphere_points, seed=spec.seed)
        sphere = {"radius": radius, "center": center.tolist(),
                  "matches": [[*a, *b] for a, b in zip(xc.tolist(), xp.tolist())]}
        atomic_write(out / "sphere.json", dumps(sphere, compact=True))
    print(out / "matches.json")
    return 0


def _truth_intrinsics(path) -> tuple[Intrinsics, Intrinsics]:
    t = read_json(path)
    t = t.get("truth", t)
    try:
        return Intrinsics.from_dict(t["camera"]), Intrinsics.from_dict(t["projector"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: missing camera/projector intrinsics") from exc


def cmd_calibrate(args) -> int:
    mf = MatchFile.read(args.matches)
    matches = mf.face_matches()
    if args.constant_camera:
        offset = tuple(args.crop_offset or (0.0, 0.0))
        kw = {"image_size": mf.camera_size, "crop_offset": offset, "pp_fixed": args.pp_fixed}
        if args.f_range is not None:
            kw["f_range"] = tuple(args.f_range)
        report = calibrate_sfm(matches, SfmConfig(**kw))
        if args.truth:
            cam, _ = _truth_intrinsics(args.truth)
            shifted = Intrinsics(cam.f, (cam.pp[0] + offset[0], cam.pp[1] + offset[1]))
            report = report.with_ground_truth(shifted, shifted)
    else:
        cfg = _objective_config(args)
        result = minimize_objective(matches, mf.pp_c, cfg)
        report = finalize_calibration(result.f_c, matches, mf.pp_c, cfg, result)
        if args.curve_out:
            result.curve.to_csv(args.curve_out)
            report = report.replace(curve_path=str(args.curve_out))
        if args.truth:
            report = report.with_ground_truth(*_truth_intrinsics(args.truth))
    text = report.to_json()
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    for flag in report.flags:
        log.warning("quality flag: %s", flag)
    return 0


def cmd_sweep(args) -> int:
    mf = MatchFile.read(args.matches)
    cfg = _objective_config(args)
    f, curve = grid_search(mf.face_matches(), mf.pp_c, cfg)
    curve.to_csv(args.output)
    print(f"argmin f_c = {f!r}{' (at search boundary)' if curve.at_boundary else ''}")
    return 0


def cmd_reconstruct(args) -> int:
    report = CalibrationReport.from_dict(read_json(args.report))
    mf = MatchFile.read(args.matches)
    cloud = reconstruct(report, {S: (mf.cam[S], mf.proj[S]) for S in LEGS})
    write_ply(args.output, cloud, binary=args.binary)
    print(f"{len(cloud)} points written, {cloud.n_dropped} dropped")
    return 0


def cmd_evaluate(args) -> int:
    report = CalibrationReport.from_dict(read_json(args.report))
    out = {}
    if args.truth:
        out["errors"] = report.with_ground_truth(*_truth_intrinsics(args.truth)).errors
    if args.sphere:
        s = read_json(args.sphere)
        rows = np.asarray(s["matches"], dtype=float).reshape(-1, 4)
        ev = bench.evaluate_sphere(report, rows[:, :2], rows[:, 2:], float(s["radius"]))
        out["sphere"] = {"fitted_radius": ev.radius, "scale": ev.scale, "radial_mae": ev.mae,
                         "radius_gt": float(s["radius"])}
    if not out:
        raise InputError("nothing to evaluate: pass --truth and/or --sphere")
    text = dumps(out)
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    seeds = range(args.first_seed, args.first_seed + args.seeds)
    cfg = ObjectiveConfig(jobs=1)
    settings = bench.BenchSettings(sigma=args.sigma, samples_per_face=args.samples_per_face,
                                   infer=args.infer_vertices, objective=cfg, jobs=args.jobs,
                                   sphere=args.sphere)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.table == 1:
        rep = bench.run_table1(seeds, settings)
        rep.write_csv(out / "table1.csv")
        atomic_write(out / "table1.json", rep.to_json())
        print(f"MAE {rep.mae:.3f}%  median {rep.median_mae:.3f}%  failed {rep.n_failed}")
    elif args.table == 2:
        tables = bench.run_ablation_table2(seeds, settings)
        bench.write_table_csv(out / "table2.csv", tables, "config")
        atomic_write(out / "table2.json", dumps({str(k): t.to_dict() for k, t in tables.items()}))
        for k, t in tables.items():
            print(f"config {k:2d} ({t.label}): MAE {t.mae:.3f}%")
    else:
        tables = bench.run_downsampling_table3(seeds, settings, args.rates or bench.TABLE3_RATES)
        bench.write_table_csv(out / "table3.csv", tables, "rate")
        atomic_write(out / "table3.json", dumps({str(k): t.to_dict() for k, t in tables.items()}))
        for k, t in tables.items():
            print(f"rate {k:4d}: MAE {t.mae:.3f}%")
        flags = bench.spread_flags(tables)
        print(f"spread {bench.mae_spread(tables):.3f} points" + (f"  [{', '.join(flags)}]" if flags else ""))
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="c2calib", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a scene: matches.json + truth.json")
    p.add_argument("spec", nargs="?", help="scene spec JSON (default: random scene from --seed)")
    p.add_argument("-o", "--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--samples-per-face", type=int, default=500)
    p.add_argument("--occlusion", type=float, default=0.0)
    p.add_argument("--infer-vertices", action="store_true",
                   help="omit camera-view vertices (only far-vertex hints are written)")
    p.add_argument("--two-view", action="store_true", help="second view is the same camera")
    p.add_argument("--sphere", action="store_true", help="also write sphere.json")
    p.add_argument("--sphere-points", type=int, default=2000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="estimate intrinsics, pose and corner")
    p.add_argument("matches")
    p.add_argument("-o", "--output")
    _add_objective_flags(p)
    p.add_argument("--curve-out", help="write the searched objective curve as CSV")
    p.add_argument("--truth", help="ground truth JSON; adds an error block")
    p.add_argument("--constant-camera", action="store_true",
                   help="two views of one unknown camera (principal point unknown)")
    p.add_argument("--crop-offset", nargs=2, type=float, metavar=("DX", "DY"))
    p.add_argument("--pp-fixed", action="store_true", help="with --constant-camera: PP at image centre")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="objective curve on a grid, as CSV")
    p.add_argument("matches")
    p.add_argument("-o", "--output", required=True)
    _add_objective_flags(p, optimizer=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reconstruct", help="triangulate matches into a PLY point cloud")
    p.add_argument("report")
    p.add_argument("matches")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="errors against ground truth and sphere metric")
    p.add_argument("report")
    p.add_argument("--truth")
    p.add_argument("--sphere")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="benchmark tables over seeded synthetic scenes")
    p.add_argument("--table", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--samples-per-face", type=int, default=500)
    p.add_argument("--rates", type=int, nargs="+")
    p.add_argument("--infer-vertices", action="store_true")
    p.add_argument("--sphere", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--out-dir", default=".")
    p.set_defaults(func=cmd_bench)
    return ap


def _configure_logging():
    level = os.environ.get("C2CALIB_LOG")
    if level:
        logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                            format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except C2CalibError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
