"""Two views of a corner taken by one unknown camera.

With a constant camera the principal point is searched together with f,
so cropping the images must move the estimate by exactly the crop.
"""

# %% Two views, same intrinsics
import numpy as np

from c2calib.sfm import SfmConfig, calibrate_sfm
from c2calib.synthetic import generate_scene, two_view_spec

spec = two_view_spec(0, samples_per_face=200)
matches = generate_scene(spec).face_matches()
print("true camera:", spec.camera.f, spec.camera.pp)

# %% Full images
cfg = SfmConfig(f_range=(1000.0, 3000.0))
full = calibrate_sfm(matches, cfg)
print("full images:   f", round(full.camera.f, 2), " pp", np.round(full.camera.pp, 2))

# %% Crop 200 px from the left and 150 px from the top
crop = calibrate_sfm(matches, cfg.replace(crop_offset=(-200.0, -150.0)))
print("cropped:       f", round(crop.camera.f, 2), " pp", np.round(crop.camera.pp, 2))
print("pp shift:", np.round(np.subtract(full.camera.pp, crop.camera.pp), 2))

# %% Fixing the principal point at the image centre biases f when it is off-centre
fixed = calibrate_sfm(matches, cfg.replace(pp_fixed=True))
print("pp fixed:      f", round(fixed.camera.f, 2), " pp", fixed.camera.pp)
