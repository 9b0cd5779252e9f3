import numpy as np
import pytest

from c2calib.calibration import calibrate, finalize_calibration
from c2calib.errors import EmptyOutput, InsufficientPoints
from c2calib.geometry import Pose, compose, dehomogenize, homogeneous
from c2calib.reconstruction import (
    GAUGE,
    LABELS,
    PointCloud,
    orthogonality_metric,
    read_ply,
    reconstruct,
    reconstruct_points,
    scale_align,
    write_ply,
)
from c2calib.report import CalibrationReport


@pytest.fixture(scope="module")
def truth_report(clean_scene):
    return CalibrationReport.from_truth(clean_scene.truth)


@pytest.fixture(scope="module")
def pipeline_report(clean_scene, clean_matches):
    return calibrate(clean_matches, clean_scene.pp_c)


def true_points(scene):
    return np.vstack([scene.truth.points[S] for S in "ABC"])


def aligned_rms(cloud, scene):
    X = cloud.points
    Y = true_points(scene)[cloud.index]
    s = scale_align(X, Y)
    return float(np.sqrt(np.mean(np.sum((s * X - Y) ** 2, axis=1))))


def test_truth_calibration_reconstructs_exactly(truth_report, clean_scene, clean_matches):
    cloud = reconstruct(truth_report, clean_matches)
    assert cloud.n_dropped == 0 and len(cloud) == sum(clean_matches.counts().values())
    assert aligned_rms(cloud, clean_scene) < 1e-8


def test_pipeline_calibration_reconstructs(pipeline_report, clean_scene, clean_matches):
    assert aligned_rms(reconstruct(pipeline_report, clean_matches), clean_scene) < 1e-4


def test_labels_follow_faces(truth_report, clean_matches):
    cloud = reconstruct(truth_report, clean_matches)
    n = clean_matches.counts()
    assert list(cloud.labels[: n["A"]]) == ["A"] * n["A"]
    assert list(cloud.labels[-n["C"]:]) == ["C"] * n["C"]
    np.testing.assert_array_equal(cloud.index, np.arange(len(cloud)))


def test_zero_baseline_is_empty(truth_report, clean_matches):
    flat = truth_report.replace(pose=Pose(truth_report.pose.R, np.zeros(3)))
    with pytest.raises(EmptyOutput):
        reconstruct(flat, clean_matches)


def test_points_behind_are_dropped(truth_report, clean_scene):
    # mirrored through the camera center a point keeps its camera pixel but lies behind
    X = clean_scene.truth.points["A"][:10]
    Xb = np.vstack([X[:4], -X[4:]])
    M_c = compose(truth_report.camera).M
    M_p = compose(truth_report.projector, truth_report.pose).M
    s = 1.0 / clean_scene.truth.c2.X_O[2]
    xc = dehomogenize(homogeneous(s * Xb) @ M_c.T)
    xp = dehomogenize(homogeneous(s * Xb) @ M_p.T)
    cloud = reconstruct(truth_report, {"other": (xc, xp)})
    assert len(cloud) == 4 and cloud.n_dropped == 6
    np.testing.assert_array_equal(cloud.index, np.arange(4))
    with pytest.raises(EmptyOutput):
        reconstruct(truth_report, {"other": (xc[4:], xp[4:])})


def test_orthogonality_of_truth_cloud(truth_report, clean_matches):
    m = orthogonality_metric(reconstruct(truth_report, clean_matches))
    assert set(m.angles) == {"AB", "AC", "BC"}
    assert m.max_deviation < 0.01


def test_wrong_focal_distorts_angles(truth_report, clean_scene, clean_matches):
    f = clean_scene.truth.camera.f
    good = orthogonality_metric(reconstruct(truth_report, clean_matches)).max_deviation
    bad_report = finalize_calibration(1.2 * f, clean_matches, clean_scene.pp_c)
    bad = orthogonality_metric(reconstruct(bad_report, clean_matches))
    assert abs(bad.max_deviation) > abs(good)


def test_two_faces_give_one_pair(truth_report, clean_matches):
    cloud = reconstruct(truth_report, {S: (clean_matches.cam[S], clean_matches.proj[S]) for S in "AB"})
    m = orthogonality_metric(cloud)
    assert m.angles["AB"] is not None
    assert m.angles["AC"] is None and m.angles["BC"] is None


def test_insufficient_points():
    cloud = PointCloud(np.eye(3)[:2] + [0, 0, 5], ["A", "A"])
    with pytest.raises(InsufficientPoints):
        orthogonality_metric(cloud)
    cloud = PointCloud(np.random.default_rng(0).normal(size=(5, 3)), ["A"] * 5)
    with pytest.raises(InsufficientPoints):
        orthogonality_metric(cloud)


def test_scale_gauge_invariance(truth_report, clean_scene, clean_matches):
    cloud = reconstruct(truth_report, clean_matches)
    doubled = truth_report.replace(pose=Pose(truth_report.pose.R, 2 * truth_report.pose.t))
    cloud2 = reconstruct(doubled, clean_matches)
    np.testing.assert_allclose(cloud2.points, 2 * cloud.points, rtol=1e-9)
    a = orthogonality_metric(cloud).deviations
    b = orthogonality_metric(cloud2).deviations
    assert a == pytest.approx(b, abs=1e-9)
    assert aligned_rms(cloud2, clean_scene) == pytest.approx(aligned_rms(cloud, clean_scene), abs=1e-12)


def test_noisy_points_near_true_faces(noisy_scene):
    # depth error of two-view triangulation is about sigma z^2 / (f_p b)
    t = noisy_scene.truth
    b = np.linalg.norm(t.pose.center)
    report = CalibrationReport.from_truth(t)
    cloud = reconstruct(report, noisy_scene.face_matches())
    s = t.c2.X_O[2]
    for S in "ABC":
        X = s * cloud.face(S)
        n, d = t.c2.face_plane(S)
        dist = np.abs(X @ n + d) / np.linalg.norm(n)
        bound = 10 * 0.5 * X[:, 2] ** 2 / (t.projector.f * b)
        assert np.all(dist < bound)


def test_single_set_reconstruction(truth_report, clean_matches):
    cloud = reconstruct_points(truth_report, clean_matches.cam["B"], clean_matches.proj["B"])
    assert set(cloud.labels) == {"other"}


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 0, 0]]), ["A"])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((1, 3)), ["D"])


@pytest.mark.parametrize("binary", [False, True])
def test_ply_round_trip(tmp_path, truth_report, clean_matches, binary):
    cloud = reconstruct(truth_report, clean_matches)
    path = tmp_path / "cloud.ply"
    write_ply(path, cloud, binary=binary)
    back = read_ply(path)
    np.testing.assert_array_equal(back.points, cloud.points)
    assert list(back.labels) == list(cloud.labels)
    assert back.gauge == GAUGE


def test_ply_header_conformance(tmp_path):
    cloud = PointCloud(np.array([[0.0, 0.0, 1.0], [1.0, 2.0, 3.0]]), ["A", "other"])
    path = tmp_path / "c.ply"
    write_ply(path, cloud)
    lines = path.read_text().splitlines()
    assert lines[0] == "ply"
    assert lines[1] == "format ascii 1.0"
    body = [l for l in lines[2:] if not l.startswith("comment")]
    assert body[:6] == [
        "element vertex 2",
        "property double x",
        "property double y",
        "property double z",
        "property int face",
        "end_header",
    ]
    assert body[6].split() == ["0.0", "0.0", "1.0", str(LABELS.index("A"))]
    assert body[7].split()[-1] == str(LABELS.index("other"))
    assert len(body) == 8
