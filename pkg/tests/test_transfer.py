import numpy as np
import pytest

from c2calib.c2 import C2Model
from c2calib.errors import DegenerateConfiguration, NonPositiveDepth, RayParallelToPlane
from c2calib.geometry import Intrinsics, project, rotation_angle
from c2calib.transfer import BACKWARD, FORWARD, cycle, intersect_face_points, transfer


def test_forward_transfer_recovers_projector(clean_scene, clean_matches):
    t = clean_scene.truth
    res = transfer(t.camera, clean_matches, FORWARD)
    np.testing.assert_allclose(res.K_target.K, t.projector.K, rtol=1e-6, atol=1e-4)
    assert rotation_angle(res.pose.R, t.pose.R) < 1e-6
    # translation only up to the corner's depth gauge
    s = t.c2.X_O[2]
    np.testing.assert_allclose(res.pose.t * s, t.pose.t, rtol=1e-6, atol=1e-7)
    assert res.mean_reprojection < 1e-6


def test_recovered_corner_matches_truth(clean_scene, clean_matches):
    t = clean_scene.truth
    res = transfer(t.camera, clean_matches, FORWARD)
    np.testing.assert_allclose(res.c2.vertices, t.c2.vertices / t.c2.X_O[2], atol=1e-8)


def test_backward_transfer_recovers_camera(clean_scene, clean_matches):
    t = clean_scene.truth
    res = transfer(t.projector, clean_matches, BACKWARD)
    np.testing.assert_allclose(res.K_target.K, t.camera.K, rtol=1e-6, atol=1e-4)


def test_cycle_is_identity_at_truth(clean_scene, clean_matches):
    t = clean_scene.truth
    K_p, K_c, pp = cycle(t.camera.f, t.camera.pp, clean_matches)
    assert K_c.fx == pytest.approx(t.camera.f, rel=1e-7)
    assert K_c.fy == pytest.approx(t.camera.f, rel=1e-7)
    np.testing.assert_allclose(pp, t.camera.pp, atol=1e-4)
    assert abs(K_p.skew) < 1e-4 and abs(K_p.fx - K_p.fy) < 1e-4


def test_wrong_focal_breaks_the_cycle(clean_scene, clean_matches):
    t = clean_scene.truth
    K_p, K_c, pp = cycle(1.3 * t.camera.f, t.camera.pp, clean_matches)
    assert abs(K_p.fx - K_p.fy) > 1.0 or abs(K_c.fx - 1.3 * t.camera.f) > 1.0


def test_swapped_matches_mirror_directions(clean_matches, clean_scene):
    t = clean_scene.truth
    a = transfer(t.projector, clean_matches, BACKWARD)
    b = transfer(t.projector, clean_matches.swapped(), FORWARD)
    np.testing.assert_allclose(a.K_target.K, b.K_target.K)


def test_too_few_matches(clean_matches, clean_scene):
    thin = clean_matches.downsample(10**6)
    assert all(n == 1 for n in thin.counts().values())
    with pytest.raises(DegenerateConfiguration):
        transfer(clean_scene.truth.camera, thin)


def test_downsample_keeps_every_nth(clean_matches):
    d = clean_matches.downsample(7)
    for S in "ABC":
        np.testing.assert_array_equal(d.cam[S], clean_matches.cam[S][::7])
        np.testing.assert_array_equal(d.proj[S], clean_matches.proj[S][::7])
    with pytest.raises(ValueError):
        clean_matches.downsample(0)


def test_intersection_lands_on_face(clean_scene, clean_matches):
    t = clean_scene.truth
    res = transfer(t.camera, clean_matches)
    X = intersect_face_points(res.c2, t.camera, "A", clean_matches.cam["A"])
    n, d = res.c2.face_plane("A")
    np.testing.assert_allclose(X @ n + d, 0.0, atol=1e-12)


def test_ray_parallel_to_face(clean_scene, clean_matches):
    t = clean_scene.truth
    c2 = transfer(t.camera, clean_matches).c2
    # a pixel whose viewing ray is parallel to face A
    n = c2.leg("A")
    u = np.cross(n, [1.0, 0.0, 0.0])
    u = u if u[2] > 0 else -u
    x = (t.camera.K @ u)[:2] / u[2]
    with pytest.raises(RayParallelToPlane, match="face A"):
        intersect_face_points(c2, Intrinsics(t.camera.f, t.camera.pp), "A", x)


def test_intersection_behind_camera(clean_scene, clean_matches):
    t = clean_scene.truth
    c2 = transfer(t.camera, clean_matches).c2
    # the corner mirrored through the camera center lies behind it
    mirrored = C2Model(*(-c2.vertices), convexity=c2.convexity)
    with pytest.raises(NonPositiveDepth):
        intersect_face_points(mirrored, t.camera, "A", clean_matches.cam["A"])


def test_transfer_is_deterministic(noisy_scene):
    m = noisy_scene.face_matches()
    K = Intrinsics(1700.0, noisy_scene.pp_c)
    a = transfer(K, m, FORWARD)
    b = transfer(K, m, FORWARD)
    assert a.K_target.K.tobytes() == b.K_target.K.tobytes()
    assert a.pose.R.tobytes() == b.pose.R.tobytes() and a.pose.t.tobytes() == b.pose.t.tobytes()


def test_forward_reprojection_and_baseline_direction(clean_scene, clean_matches):
    t = clean_scene.truth
    res = transfer(t.camera, clean_matches, FORWARD)
    for S in "ABC":
        X = intersect_face_points(res.c2, t.camera, S, clean_matches.cam[S])
        err = np.linalg.norm(project(res.camera, X) - clean_matches.proj[S], axis=1)
        assert err.max() < 1e-6
    u = res.pose.t / np.linalg.norm(res.pose.t)
    v = t.pose.t / np.linalg.norm(t.pose.t)
    assert np.arccos(np.clip(u @ v, -1, 1)) < 1e-5
