import json

import numpy as np
import pytest

from c2calib.c2 import CONCAVE, CONVEX
from c2calib.errors import VisibilityFailure
from c2calib.geometry import compose, project
from c2calib.synthetic import (
    REFERENCE_CAMERA,
    REFERENCE_CAMERA_SIZE,
    REFERENCE_PROJECTOR,
    REFERENCE_PROJECTOR_SIZE,
    SceneSpec,
    default_scene_spec,
    default_sphere,
    face_through_center_spec,
    generate_scene,
    random_scene_spec,
    sphere_matches,
    two_view_spec,
)


def test_reference_defaults():
    assert REFERENCE_CAMERA.f == 1791.1 and REFERENCE_CAMERA.pp == (1256.3, 1054.3)
    assert REFERENCE_PROJECTOR.f == 1247.3 and REFERENCE_PROJECTOR.pp == (377.1, 234.0)
    assert REFERENCE_CAMERA_SIZE == (2448, 2048) and REFERENCE_PROJECTOR_SIZE == (854, 480)
    spec = default_scene_spec()
    assert spec.camera == REFERENCE_CAMERA and spec.projector == REFERENCE_PROJECTOR


def test_noiseless_samples_project_exactly(clean_scene):
    t = clean_scene.truth
    M_c, M_p = compose(t.camera), compose(t.projector, t.pose)
    for S in "ABC":
        np.testing.assert_allclose(project(M_c, t.points[S]), clean_scene.cam[S], atol=1e-9)
        np.testing.assert_allclose(project(M_p, t.points[S]), clean_scene.proj[S], atol=1e-9)
        n, d = t.c2.face_plane(S)
        np.testing.assert_allclose(t.points[S] @ n + d, 0.0, atol=1e-12)


def test_samples_inside_both_images(noisy_scene):
    t = noisy_scene.truth
    for S in "ABC":
        for pts, (w, h) in ((noisy_scene.cam[S], t.camera_size), (noisy_scene.proj[S], t.projector_size)):
            assert np.all(pts >= 0) and np.all(pts[:, 0] <= w) and np.all(pts[:, 1] <= h)


def test_noise_only_on_projector(clean_scene, noisy_scene):
    for S in "ABC":
        np.testing.assert_array_equal(clean_scene.cam[S], noisy_scene.cam[S])
        d = noisy_scene.proj[S] - clean_scene.proj[S]
        assert 0.3 < d.std() < 0.7


def test_symmetric_noise_switch():
    spec = random_scene_spec(0, sigma=0.5).replace(symmetric_noise=True)
    clean = generate_scene(spec.replace(sigma=0.0))
    noisy = generate_scene(spec)
    assert not np.array_equal(clean.cam["A"], noisy.cam["A"])


def test_scene_is_deterministic():
    a = generate_scene(random_scene_spec(5, sigma=0.5))
    b = generate_scene(random_scene_spec(5, sigma=0.5))
    for S in "ABC":
        assert a.cam[S].tobytes() == b.cam[S].tobytes()
        assert a.proj[S].tobytes() == b.proj[S].tobytes()


def test_spec_json_round_trip():
    spec = random_scene_spec(11, sigma=0.25, occlusion=0.3)
    text = json.dumps(spec.to_dict(), sort_keys=True)
    back = SceneSpec.from_dict(json.loads(text))
    assert json.dumps(back.to_dict(), sort_keys=True) == text


def test_spec_rejects_unknown_fields():
    with pytest.raises(ValueError):
        SceneSpec.from_dict({"colour": "red"})


def test_corner_behind_camera():
    spec = default_scene_spec().replace(c2_origin=np.array([0.0, 0.0, -3.0]))
    with pytest.raises(VisibilityFailure):
        generate_scene(spec)


@pytest.mark.parametrize("convexity", [CONCAVE, CONVEX])
def test_requested_convexity(convexity):
    spec = random_scene_spec(2, convexity=convexity)
    assert spec.c2_model().convexity == convexity
    assert generate_scene(spec).truth.c2.convexity == convexity


def test_occlusion_keeps_central_region():
    full = generate_scene(random_scene_spec(4))
    occ = generate_scene(random_scene_spec(4, occlusion=0.9))
    v = full.truth.cam_vertices
    for S in "ABC":
        assert len(occ.cam[S]) == len(full.cam[S])
        # occluded samples stay away from the vertices
        assert np.min(np.linalg.norm(occ.cam[S] - v["O"], axis=1)) > np.min(
            np.linalg.norm(full.cam[S] - v["O"], axis=1))


def test_two_view_spec_shares_the_camera():
    spec = two_view_spec(3)
    assert spec.projector == spec.camera and spec.projector_size == spec.camera_size


@pytest.mark.parametrize("face", ["A", "B", "C"])
def test_face_through_center(face):
    spec = face_through_center_spec(face)
    c2 = spec.c2_model()
    n, d = c2.face_plane(face)
    assert abs(d) < 1e-9 * np.linalg.norm(n) * np.linalg.norm(c2.X_O)


def test_sphere_samples_on_sphere():
    spec = random_scene_spec(1)
    center, radius = default_sphere(spec)
    xc, xp, X = sphere_matches(spec, center, radius, 500)
    np.testing.assert_allclose(np.linalg.norm(X - center, axis=1), radius, rtol=1e-12)
    np.testing.assert_allclose(project(compose(spec.camera), X), xc, atol=1e-9)
    assert len(xc) == len(xp) == 500
    # the sphere floats in front of every corner vertex
    assert np.linalg.norm(center) + radius < np.min(np.linalg.norm(spec.c2_model().vertices, axis=1))
