import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c2calib.c2 import VertexImages
from c2calib.errors import C2CalibError, InconsistentLegs, NotAHomology, RayParallelToPlane
from c2calib.faces import (
    FaceHomographies,
    LEG_FACES,
    LegLines,
    build_face_matches,
    estimate_face_homographies,
    fit_homology,
    infer_leg_line,
    infer_legs,
    infer_vertices,
    line_point_distance,
    map_vertices_to_projector,
    right_angle_vertex,
    snap_to_line,
)
from c2calib.geometry import homogeneous
from c2calib.synthetic import generate_scene, random_scene_spec


@pytest.fixture(scope="module")
def clean_H(clean_scene):
    return estimate_face_homographies(clean_scene.cam, clean_scene.proj)


@pytest.fixture(scope="module")
def clean_legs(clean_scene, clean_H):
    return infer_legs(clean_H, clean_scene.cam, clean_scene.proj)


def test_leg_lines_pass_through_true_vertices(clean_scene, clean_legs):
    v = clean_scene.truth.cam_vertices
    for S in "ABC":
        assert line_point_distance(clean_legs.lines[S], v["O"]) < 0.01
        assert line_point_distance(clean_legs.lines[S], v[S]) < 0.01


def test_right_angle_vertex_noiseless(clean_scene, clean_legs):
    assert np.linalg.norm(clean_legs.RA - clean_scene.truth.cam_vertices["O"]) < 0.05


def test_projector_leg_line_noiseless(clean_scene, clean_H):
    pv = clean_scene.truth.proj_vertices
    for S, (F1, F2) in LEG_FACES.items():
        l = infer_leg_line(clean_H[F1], clean_H[F2])
        assert line_point_distance(l, pv["O"]) < 0.01
        assert line_point_distance(l, pv[S]) < 0.01


def test_homology_eigenstructure_noiseless(clean_scene, clean_H):
    G = clean_H["B"] @ np.linalg.inv(clean_H["C"])
    G = G / np.cbrt(np.linalg.det(G))
    w = np.sort_complex(np.linalg.eigvals(G))
    d = np.abs(np.subtract.outer(w, w)) + np.eye(3) * 1e9
    i, j = np.unravel_index(np.argmin(d), d.shape)
    assert abs(w[i] - w[j]) / abs(w[i]) < 1e-9
    fit = fit_homology(G)
    assert fit.residual < 1e-9
    # the isolated fixed point is the projector-view image of the camera center
    pose = clean_scene.truth.pose
    e = clean_scene.truth.projector.K @ pose.t
    np.testing.assert_allclose(fit.vertex / fit.vertex[2], e / e[2], rtol=1e-6)


def test_fit_homology_exact_construction(rng):
    a = rng.normal(size=3)
    v = rng.normal(size=3)
    mu = 1.7
    G = mu * np.eye(3) + np.outer(v, a)
    fit = fit_homology(G)
    s = np.cbrt(np.linalg.det(G))
    assert fit.mu == pytest.approx(mu / s, rel=1e-9)
    assert fit.nu == pytest.approx((mu + a @ v) / s, rel=1e-9)
    assert abs(abs(fit.axis @ a) / np.linalg.norm(a) - 1) < 1e-9
    assert abs(abs(fit.vertex @ v) / np.linalg.norm(v) - 1) < 1e-9


def test_identical_homographies_are_not_a_homology(clean_H):
    with pytest.raises(NotAHomology):
        infer_leg_line(clean_H["A"], clean_H["A"])
    with pytest.raises(NotAHomology):
        fit_homology(np.eye(3))


def test_generic_matrix_is_not_a_homology():
    with pytest.raises(NotAHomology):
        fit_homology(np.diag([1.0, 2.0, 4.0]))


@settings(max_examples=50, deadline=None)
@given(s1=st.floats(1e-3, 1e3), s2=st.floats(1e-3, 1e3), neg1=st.booleans(), neg2=st.booleans())
def test_leg_line_invariant_to_homography_scale(clean_H, s1, s2, neg1, neg2):
    a = infer_leg_line(clean_H["B"], clean_H["C"])
    b = infer_leg_line((-s1 if neg1 else s1) * clean_H["B"], (-s2 if neg2 else s2) * clean_H["C"])
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_parallel_legs_are_inconsistent():
    lines = {S: np.array([0.0, 1.0, -c]) for S, c in zip("ABC", (10.0, 20.0, 30.0))}
    with pytest.raises(InconsistentLegs):
        right_angle_vertex(lines)


def test_non_concurrent_legs_fail_the_gate():
    # three lines forming a triangle with 100 px sides
    lines = {"A": np.array([0.0, 1.0, 0.0]), "B": np.array([1.0, 0.0, 0.0]),
             "C": np.array([1.0, 1.0, -100.0]) / np.sqrt(2)}
    with pytest.raises(InconsistentLegs, match="spread"):
        right_angle_vertex(lines)


def test_snap_is_idempotent(rng):
    l = np.array([0.6, 0.8, -50.0])
    p = snap_to_line(rng.normal(size=2) * 100, l)
    assert abs(l @ homogeneous(p)) < 1e-12
    np.testing.assert_array_equal(snap_to_line(p, l), p)


def test_vertices_lie_on_their_legs(clean_scene, clean_legs):
    v = infer_vertices(clean_legs, clean_scene.far_vertex_hints())
    for S in "ABC":
        assert line_point_distance(clean_legs.lines[S], v[S]) < 1e-12
        np.testing.assert_allclose(v[S], clean_scene.truth.cam_vertices[S], atol=0.05)


def test_scalar_hints_and_default_extent(clean_scene, clean_legs):
    v_default = infer_vertices(clean_legs)
    v_scalar = infer_vertices(clean_legs, {S: clean_legs.extents[S] for S in "ABC"})
    np.testing.assert_allclose(v_default.as_array(), v_scalar.as_array())
    for S in "ABC":
        d = np.linalg.norm(v_scalar[S] - clean_legs.RA)
        assert d == pytest.approx(clean_legs.extents[S])


def test_short_leg_rejected(clean_legs):
    with pytest.raises(C2CalibError):
        infer_vertices(clean_legs, {"A": 5.0})


def test_projector_vertices_noiseless(clean_scene, clean_H):
    pv, spread = map_vertices_to_projector(clean_scene.truth.cam_vertices, clean_H)
    np.testing.assert_allclose(pv.as_array(), clean_scene.truth.proj_vertices.as_array(), atol=1e-6)
    assert max(spread.values()) < 1e-6


def test_identity_homographies_map_vertices_unchanged():
    H = FaceHomographies({S: np.eye(3) for S in "ABC"}, {S: 0.0 for S in "ABC"})
    v = VertexImages.from_array([(10, 20), (30, 40), (50, 60), (70, 90)])
    pv, spread = map_vertices_to_projector(v, H)
    np.testing.assert_array_equal(pv.as_array(), v.as_array())
    assert max(spread.values()) == 0.0


def test_face_through_camera_center_is_rejected(clean_scene):
    cam = {S: clean_scene.cam[S].copy() for S in "ABC"}
    # squash face B's camera samples onto a line
    cam["B"][:, 1] = 3.0 * cam["B"][:, 0] + 1.0
    with pytest.raises(RayParallelToPlane, match="face B"):
        build_face_matches(cam, clean_scene.proj, clean_scene.spec.convexity)


def test_inference_path_matches_truth(clean_scene):
    m, info = build_face_matches(clean_scene.cam, clean_scene.proj, clean_scene.spec.convexity,
                                 hints=clean_scene.far_vertex_hints())
    np.testing.assert_allclose(m.cam_vertices.as_array(), clean_scene.truth.cam_vertices.as_array(), atol=0.05)
    assert isinstance(info.legs, LegLines)


def test_heavy_occlusion_inference():
    scene = generate_scene(random_scene_spec(3, occlusion=0.9))
    v = scene.truth.cam_vertices
    H = estimate_face_homographies(scene.cam, scene.proj)
    legs = infer_legs(H, scene.cam, scene.proj)
    assert np.linalg.norm(legs.RA - v["O"]) < 0.05
    for S in "ABC":
        assert line_point_distance(legs.lines[S], v[S]) < 0.01


@pytest.fixture(scope="module")
def noisy_inference():
    """Leg-line, RA and spread errors at 0.5 px over 100 scenes."""
    out = {"line": [], "ra": [], "spread": [], "failed": 0}
    for seed in range(100):
        scene = generate_scene(random_scene_spec(seed, sigma=0.5))
        v = scene.truth.cam_vertices
        H = estimate_face_homographies(scene.cam, scene.proj)
        try:
            legs = infer_legs(H, scene.cam, scene.proj)
        except InconsistentLegs:
            out["failed"] += 1
            continue
        worst = 0.0
        for S in "ABC":
            d = (v[S] - v["O"]) / np.linalg.norm(v[S] - v["O"])
            # distance to the true leg image over the observed stretch of the leg
            for t in np.linspace(0.0, legs.extents[S], 20):
                worst = max(worst, line_point_distance(legs.lines[S], v["O"] + t * d))
        out["line"].append(worst)
        out["ra"].append(np.linalg.norm(legs.RA - v["O"]))
        out["spread"].append(max(map_vertices_to_projector(v, H)[1].values()))
    return out


def test_noisy_leg_lines_within_two_pixels(noisy_inference):
    assert np.median(noisy_inference["line"]) < 2.0


def test_noisy_vertex_spread_below_three_pixels(noisy_inference):
    assert np.median(noisy_inference["spread"]) < 3.0


def test_noisy_right_angle_gate_rarely_trips(noisy_inference):
    assert noisy_inference["failed"] <= 5
    assert np.median(noisy_inference["ra"]) < 1.0
