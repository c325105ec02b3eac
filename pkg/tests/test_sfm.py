"""COLMAP text parsing, JSON interchange, and synthetic reconstructions."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from roi_compose.errors import (
    BrokenTrack,
    DegenerateOrbit,
    MalformedJson,
    MalformedLine,
    MissingFile,
    SchemaVersionMismatch,
    UnsupportedCameraModel,
    ValidationError,
)
from roi_compose.sfm import (
    CameraIntrinsics,
    CameraRing,
    OrbitSpec,
    Reconstruction,
    ScenePoints,
    load_reconstruction,
    parse_colmap_text,
    points_in_box,
    reconstruction_from_json,
    reconstruction_to_json,
    save_reconstruction,
    scale_intrinsics,
    synth_reconstruction,
    write_colmap_text,
)
from roi_compose.geometry import Aabb

# Hand-written 3-view, 5-point fixture. Observation indices and tracks were
# cross-checked manually: view 1 sees points 1,2,3; view 2 sees 2,4 plus one
# unmatched detection; view 3 sees 5.
CAMERAS = """\
# CAMERA_ID MODEL W H params
1 PINHOLE 64 48 70.0 72.0 32.0 24.0
2 SIMPLE_PINHOLE 32 32 40.0 16.0 16.0
"""

IMAGES = """\
# two lines per image
1 1.0 0.0 0.0 0.0 0.1 -0.2 3.0 1 frame_a.png
10.5 20.25 1 30.0 21.0 2 5.5 40.125 3
2 0.7071067811865476 0.7071067811865475 0.0 0.0 0.0 0.0 2.5 1 frame_b.png
12.0 13.0 2 1.0 2.0 -1 8.25 9.75 4
3 1.0 0.0 0.0 0.0 0.0 0.0 4.0 2 frame c.png
15.0 15.0 5
"""

POINTS = """\
# POINT3D_ID X Y Z R G B ERROR TRACK
1 0.5 0.25 1.0 255 0 0 0.5 1 0
2 -0.5 0.75 2.0 0 255 0 0.25 1 1 2 0
3 0.0 0.0 1.5 0 0 255 1.0 1 2
4 1.5 -1.0 0.5 128 128 128 0.125 2 2
5 2.0 2.0 2.0 10 20 30 0.0 3 0
"""


def _write_fixture(directory, cameras=CAMERAS, images=IMAGES, points=POINTS):
    (directory / "cameras.txt").write_text(cameras)
    (directory / "images.txt").write_text(images)
    (directory / "points3D.txt").write_text(points)
    return directory


def _assert_same_recon(a: Reconstruction, b: Reconstruction):
    assert sorted(a.intrinsics) == sorted(b.intrinsics)
    for cid in a.intrinsics:
        ca, cb = a.intrinsics[cid], b.intrinsics[cid]
        assert (ca.model, ca.width, ca.height) == (cb.model, cb.width, cb.height)
        assert (ca.fx, ca.fy, ca.cx, ca.cy) == (cb.fx, cb.fy, cb.cx, cb.cy)
    assert sorted(a.views) == sorted(b.views)
    for vid in a.views:
        va, vb = a.views[vid], b.views[vid]
        assert va.name == vb.name and va.camera_id == vb.camera_id
        np.testing.assert_array_equal(va.rotation, vb.rotation)
        np.testing.assert_array_equal(va.translation, vb.translation)
        assert len(va.observations) == len(vb.observations)
        for oa, ob in zip(va.observations, vb.observations):
            assert (oa.u, oa.v, oa.point3d_id) == (ob.u, ob.v, ob.point3d_id)
    assert sorted(a.points) == sorted(b.points)
    for pid in a.points:
        pa, pb = a.points[pid], b.points[pid]
        assert tuple(pa.position) == tuple(pb.position)
        assert pa.color == pb.color and pa.error == pb.error
        assert list(pa.track) == list(pb.track)


class TestColmapParse:
    def test_fixture_parses_field_by_field(self, tmp_path):
        recon = parse_colmap_text(_write_fixture(tmp_path))
        assert sorted(recon.intrinsics) == [1, 2]
        c1 = recon.intrinsics[1]
        assert (c1.model, c1.width, c1.height) == ("pinhole", 64, 48)
        assert (c1.fx, c1.fy, c1.cx, c1.cy) == (70.0, 72.0, 32.0, 24.0)
        c2 = recon.intrinsics[2]
        assert c2.model == "simple-pinhole" and c2.fx == c2.fy == 40.0

        assert sorted(recon.views) == [1, 2, 3]
        v1 = recon.views[1]
        assert v1.name == "frame_a.png" and v1.camera_id == 1
        assert tuple(v1.rotation) == (1.0, 0.0, 0.0, 0.0)
        assert tuple(v1.translation) == (0.1, -0.2, 3.0)
        assert [(o.u, o.v, o.point3d_id) for o in v1.observations] == [
            (10.5, 20.25, 1), (30.0, 21.0, 2), (5.5, 40.125, 3)]
        v2 = recon.views[2]
        assert v2.observations[1].point3d_id is None  # -1 means unmatched
        assert recon.views[3].name == "frame c.png"  # names may contain spaces

        assert sorted(recon.points) == [1, 2, 3, 4, 5]
        p2 = recon.points[2]
        assert tuple(p2.position) == (-0.5, 0.75, 2.0)
        assert p2.color == (0, 255, 0) and p2.error == 0.25
        assert p2.track == [(1, 1), (2, 0)]

    def test_empty_points_zero_observations(self, tmp_path):
        _write_fixture(tmp_path,
                       images="1 1 0 0 0 0 0 3 1 a.png\n\n",
                       points="# empty\n")
        recon = parse_colmap_text(tmp_path)
        assert len(recon.views) == 1 and len(recon.points) == 0
        assert recon.views[1].observations == []

    def test_write_then_parse_is_identity(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        recon = parse_colmap_text(_write_fixture(src))
        out = tmp_path / "out"
        write_colmap_text(recon, out)
        _assert_same_recon(parse_colmap_text(out), recon)

    def test_json_round_trip_identity(self, tmp_path):
        recon = parse_colmap_text(_write_fixture(tmp_path))
        back = reconstruction_from_json(reconstruction_to_json(recon))
        _assert_same_recon(back, recon)

    def test_file_round_trip_identity(self, tmp_path):
        recon = parse_colmap_text(_write_fixture(tmp_path))
        save_reconstruction(recon, tmp_path / "r.json")
        _assert_same_recon(load_reconstruction(tmp_path / "r.json"), recon)

    def test_empty_reconstruction_round_trips(self):
        empty = Reconstruction({}, {}, {})
        back = reconstruction_from_json(reconstruction_to_json(empty))
        assert not back.intrinsics and not back.views and not back.points


def _case(tmp_path, name, **overrides):
    d = tmp_path / name
    d.mkdir()
    return _write_fixture(d, **overrides)


class TestMalformedInputs:
    """Every corrupted directory must fail with the documented error class."""

    def test_missing_file(self, tmp_path):
        d = tmp_path / "incomplete"
        d.mkdir()
        (d / "cameras.txt").write_text(CAMERAS)
        (d / "images.txt").write_text(IMAGES)
        with pytest.raises(MissingFile):
            parse_colmap_text(d)

    def test_camera_too_few_fields(self, tmp_path):
        with pytest.raises(MalformedLine, match="cameras.txt:2"):
            parse_colmap_text(_case(tmp_path, "c1", cameras="# h\n1 PINHOLE 64\n"))

    def test_camera_non_numeric_size(self, tmp_path):
        with pytest.raises(MalformedLine):
            parse_colmap_text(_case(
                tmp_path, "c2", cameras="1 PINHOLE wide 48 70 72 32 24\n"))

    def test_unknown_camera_model(self, tmp_path):
        with pytest.raises(UnsupportedCameraModel):
            parse_colmap_text(_case(
                tmp_path, "c3", cameras="1 OPENCV 64 48 70 72 32 24 0.1 0.1\n"))

    def test_pinhole_wrong_param_count(self, tmp_path):
        with pytest.raises(MalformedLine):
            parse_colmap_text(_case(tmp_path, "c4", cameras="1 PINHOLE 64 48 70 72 32\n"))

    def test_duplicate_camera_id(self, tmp_path):
        cams = "1 PINHOLE 64 48 70 72 32 24\n1 PINHOLE 64 48 70 72 32 24\n"
        with pytest.raises(MalformedLine, match="duplicate"):
            parse_colmap_text(_case(tmp_path, "c5", cameras=cams))

    def test_image_header_too_short(self, tmp_path):
        with pytest.raises(MalformedLine):
            parse_colmap_text(_case(
                tmp_path, "i1", images="1 1 0 0 0 0 0 3 1\n\n", points="# none\n"))

    def test_observations_not_triplets(self, tmp_path):
        img = "1 1 0 0 0 0 0 3 1 a.png\n10.0 20.0\n"
        with pytest.raises(MalformedLine, match="triplet"):
            parse_colmap_text(_case(tmp_path, "i2", images=img, points="# none\n"))

    def test_dangling_image_header(self, tmp_path):
        img = "1 1 0 0 0 0 0 3 1 a.png\n\n2 1 0 0 0 0 0 3 1 b.png\n"
        with pytest.raises(MalformedLine, match="without observation"):
            parse_colmap_text(_case(tmp_path, "i3", images=img, points="# none\n"))

    def test_duplicate_image_id(self, tmp_path):
        img = ("1 1 0 0 0 0 0 3 1 a.png\n\n"
               "1 1 0 0 0 0 0 3 1 b.png\n\n")
        with pytest.raises(MalformedLine, match="duplicate"):
            parse_colmap_text(_case(tmp_path, "i4", images=img, points="# none\n"))

    def test_non_unit_quaternion(self, tmp_path):
        img = "1 2.0 0 0 0 0 0 3 1 a.png\n\n"
        with pytest.raises(MalformedLine):
            parse_colmap_text(_case(tmp_path, "i5", images=img, points="# none\n"))

    def test_image_references_unknown_camera(self, tmp_path):
        img = "1 1 0 0 0 0 0 3 9 a.png\n\n"
        with pytest.raises(BrokenTrack, match="unknown camera"):
            parse_colmap_text(_case(tmp_path, "i6", images=img, points="# none\n"))

    def test_point_color_out_of_range(self, tmp_path):
        pts = "1 0 0 1 300 0 0 0.5\n"
        with pytest.raises(MalformedLine, match="color"):
            parse_colmap_text(_case(
                tmp_path, "p1", images="1 1 0 0 0 0 0 3 1 a.png\n\n", points=pts))

    def test_track_odd_tokens(self, tmp_path):
        pts = "1 0 0 1 255 0 0 0.5 1\n"
        with pytest.raises(MalformedLine, match="pairs"):
            parse_colmap_text(_case(
                tmp_path, "p2", images="1 1 0 0 0 0 0 3 1 a.png\n\n", points=pts))

    def test_duplicate_point_id(self, tmp_path):
        pts = "1 0 0 1 255 0 0 0.5\n1 0 0 2 255 0 0 0.5\n"
        with pytest.raises(MalformedLine, match="duplicate"):
            parse_colmap_text(_case(
                tmp_path, "p3", images="1 1 0 0 0 0 0 3 1 a.png\n\n", points=pts))

    def test_track_references_unknown_view(self, tmp_path):
        pts = "1 0 0 1 255 0 0 0.5 7 0\n"
        with pytest.raises(BrokenTrack, match="unknown view"):
            parse_colmap_text(_case(
                tmp_path, "p4", images="1 1 0 0 0 0 0 3 1 a.png\n\n", points=pts))

    def test_observation_missing_from_track(self, tmp_path):
        # view observes point 1 but the point's track omits the entry
        img = "1 1 0 0 0 0 0 3 1 a.png\n5.0 5.0 1\n"
        pts = "1 0 0 1 255 0 0 0.5\n"
        with pytest.raises(BrokenTrack):
            parse_colmap_text(_case(tmp_path, "p5", images=img, points=pts))

    def test_track_points_at_wrong_observation(self, tmp_path):
        img = "1 1 0 0 0 0 0 3 1 a.png\n5.0 5.0 -1\n"
        pts = "1 0 0 1 255 0 0 0.5 1 0\n"
        with pytest.raises(BrokenTrack, match="disagrees"):
            parse_colmap_text(_case(tmp_path, "p6", images=img, points=pts))


class TestJsonErrors:
    def test_wrong_schema_version(self, tmp_path):
        recon = parse_colmap_text(_write_fixture(tmp_path))
        doc = reconstruction_to_json(recon)
        doc["schema"] = "roi-recon v99"
        with pytest.raises(SchemaVersionMismatch):
            reconstruction_from_json(doc)

    def test_truncated_stream(self, tmp_path):
        recon = parse_colmap_text(_write_fixture(tmp_path))
        save_reconstruction(recon, tmp_path / "r.json")
        blob = (tmp_path / "r.json").read_text()
        (tmp_path / "trunc.json").write_text(blob[: len(blob) // 2])
        with pytest.raises(MalformedJson):
            load_reconstruction(tmp_path / "trunc.json")

    def test_missing_field(self, tmp_path):
        recon = parse_colmap_text(_write_fixture(tmp_path))
        doc = reconstruction_to_json(recon)
        del doc["cameras"][0]["fx"]
        with pytest.raises(MalformedJson):
            reconstruction_from_json(doc)

    def test_non_object(self):
        with pytest.raises(MalformedJson):
            reconstruction_from_json([1, 2, 3])


def _unit_box_scene(rng, n=100):
    return ScenePoints(rng.uniform(-0.5, 0.5, (n, 3)),
                       rng.integers(0, 256, (n, 3)))


class TestSynth:
    def test_deterministic_per_seed(self, rng):
        scene = _unit_box_scene(rng)
        orbit = OrbitSpec([CameraRing(8, 3.0, 1.0)])
        a = synth_reconstruction(scene, orbit, seed=7)
        b = synth_reconstruction(scene, orbit, seed=7)
        assert json.dumps(reconstruction_to_json(a), sort_keys=True) == \
            json.dumps(reconstruction_to_json(b), sort_keys=True)

    def test_single_point_in_front_tracked_once(self):
        scene = ScenePoints(np.asarray([[0.0, 0.0, 0.0]]), np.asarray([[255, 0, 0]]))
        orbit = OrbitSpec([CameraRing(1, 3.0, 0.0)])
        recon = synth_reconstruction(scene, orbit, seed=0)
        assert recon.points[1].track == [(1, 0)]
        assert recon.views[1].observations[0].point3d_id == 1

    def test_point_behind_camera_has_empty_track(self):
        # single camera at (3, 0, 0) looking at origin: a point further out
        # on +x is behind the image plane
        scene = ScenePoints(np.asarray([[9.0, 0.0, 0.0]]), np.asarray([[1, 2, 3]]))
        orbit = OrbitSpec([CameraRing(1, 3.0, 0.0)])
        recon = synth_reconstruction(scene, orbit, seed=0)
        assert recon.points[1].track == []
        assert recon.views[1].observations == []

    def test_projection_matches_pinhole_equations(self):
        scene = ScenePoints(np.asarray([[0.2, -0.1, 0.3]]), np.asarray([[0, 0, 0]]))
        orbit = OrbitSpec([CameraRing(1, 4.0, 0.5)], width=100, height=80, focal=90.0)
        recon = synth_reconstruction(scene, orbit, seed=0)
        view = recon.views[1]
        R = view.rotation_matrix()
        p_cam = R @ scene.positions[0] + np.asarray(view.translation)
        u = 90.0 * p_cam[0] / p_cam[2] + 50.0 - 0.5
        v = 90.0 * p_cam[1] / p_cam[2] + 40.0 - 0.5
        obs = view.observations[0]
        assert obs.u == pytest.approx(u, abs=1e-12)
        assert obs.v == pytest.approx(v, abs=1e-12)

    def test_output_validates(self, rng):
        scene = _unit_box_scene(rng, 60)
        orbit = OrbitSpec([CameraRing(6, 2.5, 0.8), CameraRing(4, 5.0, 2.0)])
        recon = synth_reconstruction(scene, orbit, seed=3)
        recon.validate()
        assert len(recon.views) == 10

    def test_falloff_thins_distant_cameras(self, rng):
        scene = _unit_box_scene(rng, 400)
        near = CameraRing(6, 2.0, 0.5)
        far = CameraRing(6, 8.0, 0.5)
        orbit = OrbitSpec([near, far], visibility_falloff=2.0, visibility_ref_dist=2.0)
        recon = synth_reconstruction(scene, orbit, seed=1)
        near_counts = sum(len(recon.views[v].observations) for v in range(1, 7))
        far_counts = sum(len(recon.views[v].observations) for v in range(7, 13))
        assert near_counts > 2 * far_counts

    def test_degenerate_orbits_rejected(self):
        with pytest.raises(DegenerateOrbit):
            OrbitSpec([])
        with pytest.raises(DegenerateOrbit):
            OrbitSpec([CameraRing(0, 3.0, 1.0)])
        with pytest.raises(DegenerateOrbit):
            OrbitSpec([CameraRing(4, 0.0, 1.0)])


class TestPointsInBox:
    def test_closed_box_membership(self):
        pts = {
            1: (0.0, 0.0, 0.0),
            2: (1.0, 1.0, 1.0),   # on the corner: inside (closed)
            3: (1.1, 0.0, 0.0),
        }
        scene = ScenePoints(np.asarray(list(pts.values())),
                            np.zeros((3, 3), dtype=int))
        orbit = OrbitSpec([CameraRing(1, 5.0, 0.0)])
        recon = synth_reconstruction(scene, orbit, seed=0)
        assert points_in_box(recon, Aabb((-1, -1, -1), (1, 1, 1))) == [1, 2]


class TestScaleIntrinsics:
    def _intr(self, w=200, h=100, fx=220.0, fy=210.0, cx=100.0, cy=50.0):
        return CameraIntrinsics(1, "pinhole", w, h, fx, fy, cx, cy)

    def test_identity_at_one(self):
        intr = self._intr()
        assert scale_intrinsics(intr, 1.0) is intr

    def test_half_scale_even_dims(self):
        out = scale_intrinsics(self._intr(), 0.5)
        assert (out.width, out.height) == (100, 50)
        assert out.fx == 110.0 and out.fy == 105.0
        # pixel-center convention: (cx + 0.5) * 0.5 - 0.5
        assert out.cx == pytest.approx((100.0 + 0.5) * 0.5 - 0.5)
        assert out.cy == pytest.approx((50.0 + 0.5) * 0.5 - 0.5)

    def test_realized_ratio_used_for_odd_dims(self):
        out = scale_intrinsics(self._intr(w=7, h=5, cx=3.5, cy=2.5), 0.5)
        # 7 * 0.5 rounds to 4, realized ratio 4/7
        assert out.width == 4
        assert out.fx == pytest.approx(220.0 * 4 / 7)

    def test_principal_point_stays_in_bounds(self):
        out = scale_intrinsics(self._intr(cx=0.0, cy=0.0), 0.25)
        assert 0.0 <= out.cx <= out.width
        assert 0.0 <= out.cy <= out.height

    def test_center_ray_preserved(self):
        """A point at the old principal point maps to the new one."""
        intr = self._intr()
        out = scale_intrinsics(intr, 0.4)
        sx = out.width / intr.width
        assert out.cx == pytest.approx((intr.cx + 0.5) * sx - 0.5)

    def test_bad_scales_rejected(self):
        intr = self._intr()
        for s in (0.0, -0.5, 1.5, math.inf, math.nan):
            with pytest.raises(ValidationError):
                scale_intrinsics(intr, s)

    def test_minimum_one_pixel(self):
        out = scale_intrinsics(self._intr(w=3, h=3, cx=1.5, cy=1.5), 0.01)
        assert out.width == 1 and out.height == 1
