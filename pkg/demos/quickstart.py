"""Calibrate a camera-projector pair from one synthetic corner scene.

Run with ``python demos/quickstart.py``.
"""

# %% A seeded scene: reference camera and projector looking at a corner
import numpy as np

from c2calib.calibration import calibrate
from c2calib.objective import ObjectiveConfig, grid_search
from c2calib.synthetic import generate_scene, random_scene_spec

spec = random_scene_spec(0, sigma=0.5)
scene = generate_scene(spec)
matches = scene.face_matches()
print("matches per face:", matches.counts())
print("true camera f:", spec.camera.f, " true projector:", spec.projector.f, spec.projector.pp)

# %% Only the camera principal point is assumed known; f_c is searched
report = calibrate(matches, scene.pp_c)
report = report.with_ground_truth(spec.camera, spec.projector)
print("estimated f_c:", round(report.camera.f, 2))
print("estimated projector:", round(report.projector.f, 2), np.round(report.projector.pp, 2))
print("signed errors (%):", {k: round(v, 3) for k, v in report.errors.items()})
print("quality flags:", report.flags or "none")

# %% The objective along f_c has its minimum near the true focal length
f, curve = grid_search(matches, scene.pp_c, ObjectiveConfig(f_range=(1200.0, 2400.0), grid_step=50.0))
for fi, Ei in zip(curve.f, curve.E):
    print(f"  f_c = {fi:6.0f}  E = {Ei:9.3f}" + ("   <- grid minimum" if fi == f else ""))

# %% Reports are plain JSON and round trip exactly
text = report.to_json()
print(text[:400], "...")
