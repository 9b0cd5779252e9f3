"""Triangulate a scene with an estimated calibration and score a sphere.

A sphere placed in front of the corner is reconstructed, a sphere is fitted
to the cloud and the radial residuals are compared after removing global
scale.  The corner's face angles give a second, scale-free check.
"""

# %% Calibrate a noiseless scene
import numpy as np

from c2calib.bench import evaluate_sphere
from c2calib.calibration import calibrate, finalize_calibration
from c2calib.reconstruction import orthogonality_metric, reconstruct, write_ply
from c2calib.synthetic import default_sphere, generate_scene, random_scene_spec, sphere_matches

spec = random_scene_spec(1)
scene = generate_scene(spec)
matches = scene.face_matches()
report = calibrate(matches, scene.pp_c)

# %% Reconstruct the corner; faces should meet at right angles
cloud = reconstruct(report, matches)
m = orthogonality_metric(cloud)
print(f"{len(cloud)} points; face angles (deg):", {k: round(v, 4) for k, v in m.angles.items()})
write_ply("corner.ply", cloud)
print("wrote corner.ply")

# %% Sphere shape error is independent of the global scale of the cloud
center, radius = default_sphere(spec)
xc, xp, _ = sphere_matches(spec, center, radius, 2000, seed=spec.seed)
ev = evaluate_sphere(report, xc, xp, radius)
print(f"sphere radius {radius} m, radial MAE {ev.mae:.2e} m ({ev.mae / radius:.1e} of the radius)")

# %% A wrong focal length bends the sphere
for s in (1.02, 1.05, 1.1):
    bad = finalize_calibration(s * spec.camera.f, matches, scene.pp_c)
    e = evaluate_sphere(bad, xc, xp, radius).mae
    print(f"f_c x {s}: radial MAE {e / radius:.2e} of the radius, "
          f"worst face angle error {orthogonality_metric(reconstruct(bad, matches)).max_deviation:.2f} deg")
