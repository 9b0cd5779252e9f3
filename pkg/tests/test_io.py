import copy
import json

import numpy as np
import pytest

from c2calib.calibration import finalize_calibration
from c2calib.errors import InputError
from c2calib.io import MATCH_SCHEMA, MatchFile, atomic_write, read_json, validate_match_dict
from c2calib.report import CalibrationReport, intrinsic_errors, pose_from_dict, pose_to_dict, signed_percent
from c2calib.geometry import Intrinsics, Pose

from conftest import random_rotation


@pytest.fixture(scope="module")
def match_dict(clean_scene):
    return MatchFile.from_scene(clean_scene).to_dict()


@pytest.fixture(scope="module")
def report(clean_scene, clean_matches):
    t = clean_scene.truth
    return finalize_calibration(t.camera.f, clean_matches, t.camera.pp).with_ground_truth(t.camera, t.projector)


def test_match_file_round_trip_bytes(tmp_path, clean_scene):
    mf = MatchFile.from_scene(clean_scene)
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    mf.write(a)
    MatchFile.read(a).write(b)
    assert a.read_bytes() == b.read_bytes()


def test_match_file_without_vertices_round_trip(tmp_path, clean_scene):
    mf = MatchFile.from_scene(clean_scene, with_vertices=False)
    assert mf.vertices is None and set(mf.vertex_hints) == set("ABC")
    mf.write(tmp_path / "a.json")
    back = MatchFile.read(tmp_path / "a.json")
    back.write(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    m = back.face_matches()
    np.testing.assert_allclose(m.cam_vertices.as_array(), clean_scene.truth.cam_vertices.as_array(), atol=0.05)


def test_face_matches_from_file_equal_scene(clean_scene, clean_matches, match_dict):
    m = MatchFile.from_dict(match_dict).face_matches()
    for S in "ABC":
        np.testing.assert_array_equal(m.cam[S], clean_matches.cam[S])
        np.testing.assert_array_equal(m.proj[S], clean_matches.proj[S])
    np.testing.assert_array_equal(m.proj_vertices.as_array(), clean_matches.proj_vertices.as_array())


def test_schema_accepts_valid(match_dict):
    validate_match_dict(match_dict)
    assert MATCH_SCHEMA["properties"]["convexity"]["enum"] == ["concave", "convex"]


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d["faces"].pop("B"), "faces"),
    (lambda d: d.pop("pp_c"), "pp_c"),
    (lambda d: d.update(convexity="flat"), "convexity"),
    (lambda d: d.update(version=99), "version"),
    (lambda d: d["faces"]["A"][0].append(1.0), "faces/A/0"),
    (lambda d: d.update(extra=True), "extra"),
])
def test_schema_rejects(match_dict, mutate, message):
    d = copy.deepcopy(match_dict)
    mutate(d)
    with pytest.raises(InputError, match=message):
        MatchFile.from_dict(d)


def test_out_of_image_coordinates_rejected(match_dict):
    d = copy.deepcopy(match_dict)
    d["faces"]["C"][-1][2] = 1e5
    with pytest.raises(InputError, match="projector coordinates outside"):
        validate_match_dict(d)


def test_non_finite_rejected(match_dict):
    d = copy.deepcopy(match_dict)
    d["faces"]["A"][-1][0] = float("nan")
    with pytest.raises(InputError, match="non-finite"):
        validate_match_dict(d)


def test_read_json_errors(tmp_path):
    with pytest.raises(InputError, match="not found"):
        read_json(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(InputError, match="invalid JSON"):
        read_json(tmp_path / "bad.json")


def test_atomic_write_leaves_no_temporaries(tmp_path):
    atomic_write(tmp_path / "sub" / "x.txt", "hello")
    atomic_write(tmp_path / "sub" / "y.bin", b"\x00\x01")
    assert sorted(p.name for p in (tmp_path / "sub").iterdir()) == ["x.txt", "y.bin"]
    assert (tmp_path / "sub" / "x.txt").read_text() == "hello"


def test_report_round_trip(report):
    text = report.to_json()
    back = CalibrationReport.from_json(text)
    assert back.to_json() == text
    assert back.camera == report.camera and back.projector == report.projector
    np.testing.assert_array_equal(back.pose.R, report.pose.R)


def test_report_contents(report, clean_scene):
    d = json.loads(report.to_json())
    assert d["version"] == 1
    assert set(d["camera"]) == {"f", "pp", "skew"}
    assert set(d["projector_full"]) == {"fx", "fy", "skew", "pp"}
    assert len(d["pose"]["quaternion_xyzw"]) == 4
    assert set(d["c2"]) >= {"vertices", "R", "t", "k_B", "k_C", "convexity"}
    assert abs(d["errors"]["MAE"]) < 1e-3


def test_report_version_checked(report):
    d = report.to_dict()
    d["version"] = 2
    with pytest.raises(ValueError):
        CalibrationReport.from_dict(d)


def test_pose_quaternion_consistent(rng):
    pose = Pose(random_rotation(rng), rng.normal(size=3))
    d = pose_to_dict(pose)
    d_q = {"quaternion_xyzw": d["quaternion_xyzw"], "t": d["t"]}
    np.testing.assert_allclose(pose_from_dict(d_q).R, pose.R, atol=1e-12)
    np.testing.assert_array_equal(pose_from_dict(d).R, pose.R)


def test_signed_percent_convention():
    assert signed_percent(110.0, 100.0) == pytest.approx(10.0)
    assert signed_percent(90.0, 100.0) == pytest.approx(-10.0)
    e = intrinsic_errors(Intrinsics(1100.0, (101.0, 99.0)), Intrinsics(500.0, (50.0, 50.0)),
                         Intrinsics(1000.0, (0.0, 0.0)), Intrinsics(500.0, (100.0, 50.0)))
    assert e == pytest.approx({"f_c": 10.0, "f_p": 0.0, "x_p0": -50.0, "y_p0": 0.0, "MAE": 15.0})
