import numpy as np
import pytest

from vstbench.geometry import (
    CameraIntrinsics,
    GeometryError,
    Homography,
    Pose,
    RigCalibration,
    Viewpoint,
    default_rig,
    load_rig,
    plane_homography,
    project,
    reproject_pixel,
    rig_from_dict,
    rig_to_dict,
    save_rig,
    unproject,
)


def make_rig(cam_offset=(0.0, 0.0, 0.0), cam_rotation=None, fx=500.0, width=640, height=480):
    """Rig with left_eye at origin and left_camera displaced by cam_offset."""
    k = CameraIntrinsics(fx, fx, (width - 1) / 2, (height - 1) / 2, width, height)
    rot = np.eye(3) if cam_rotation is None else cam_rotation
    return RigCalibration(
        left_camera=Viewpoint(Pose(rot, np.array(cam_offset)), k),
        right_camera=Viewpoint(Pose.from_translation(0.1, 0.0, 0.0), k),
        left_eye=Viewpoint(Pose.identity(), k),
        right_eye=Viewpoint(Pose.from_translation(0.063, 0.0, 0.0), k),
    )


class TestProject:
    def test_optical_axis_maps_to_principal_point(self):
        k = CameraIntrinsics(500, 500, 320, 320, 640, 640)
        assert np.allclose(project(np.array([0.0, 0.0, 1.0]), k), [320, 320])

    def test_pinhole_arithmetic(self):
        k = CameraIntrinsics(500, 500, 320, 320, 640, 640)
        assert np.allclose(project(np.array([0.1, 0.0, 1.0]), k), [370, 320])

    def test_pinhole_arithmetic_asymmetric(self):
        k = CameraIntrinsics(600, 600, 320, 240, 640, 480)
        assert np.allclose(project(np.array([0.1, 0.2, 2.0]), k), [350, 300])

    def test_behind_camera_raises(self):
        k = CameraIntrinsics(500, 500, 320, 320, 640, 640)
        with pytest.raises(GeometryError, match="behind camera"):
            project(np.array([0.0, 0.0, -1.0]), k)
        with pytest.raises(GeometryError, match="behind camera"):
            project(np.array([0.0, 0.0, 0.0]), k)


class TestUnproject:
    def test_inverse_of_projection(self):
        k = CameraIntrinsics(500, 500, 320, 320, 640, 640)
        assert np.allclose(unproject(np.array([320.0, 320.0]), 1.0, k), [0, 0, 1])
        assert np.allclose(unproject(np.array([370.0, 320.0]), 1.0, k), [0.1, 0, 1])

    def test_invalid_depth_raises(self):
        k = CameraIntrinsics(500, 500, 320, 320, 640, 640)
        with pytest.raises(GeometryError, match="invalid depth"):
            unproject(np.array([320.0, 320.0]), 0.0, k)

    def test_round_trip_random(self):
        k = CameraIntrinsics(480, 510, 315.5, 242.0, 640, 480)
        rng = np.random.default_rng(7)
        pixels = rng.uniform([0, 0], [639, 479], size=(1000, 2))
        depths = rng.uniform(0.1, 20.0, size=1000)
        back = project(unproject(pixels, depths, k), k)
        assert np.max(np.abs(back - pixels)) < 1e-9


class TestReprojectPixel:
    def test_identity_rig_is_identity(self):
        rig = make_rig()
        rng = np.random.default_rng(3)
        pix = rng.uniform([0, 0], [639, 479], size=(50, 2))
        out, ok = reproject_pixel(pix, rng.uniform(0.3, 5.0, 50), "left_camera", "left_eye", rig)
        assert ok.all()
        assert np.max(np.abs(out - pix)) < 1e-9

    def test_lateral_baseline_disparity(self):
        # camera 0.032 m left of the eye: u' = u - fx*b/d by hand derivation
        rig = make_rig(cam_offset=(-0.032, 0.0, 0.0))
        pix = np.array([319.5, 239.5])
        out, ok = reproject_pixel(pix, 1.0, "left_camera", "left_eye", rig)
        assert ok
        assert np.allclose(out, [319.5 - 16.0, 239.5], atol=1e-9)

    def test_lateral_baseline_disparity_at_2m(self):
        rig = make_rig(cam_offset=(-0.032, 0.0, 0.0))
        out, _ = reproject_pixel(np.array([319.5, 239.5]), 2.0, "left_camera", "left_eye", rig)
        assert np.allclose(out, [319.5 - 8.0, 239.5], atol=1e-9)

    def test_behind_eye_marked_invalid(self):
        # camera far ahead of the eye: a very close point lands behind the eye
        rig = make_rig(cam_offset=(0.0, 0.0, -1.0))
        out, ok = reproject_pixel(np.array([319.5, 239.5]), 0.5, "left_camera", "left_eye", rig)
        assert not ok
        assert np.isnan(out).all()

    def test_invalid_depth_marked(self):
        rig = make_rig()
        _, ok = reproject_pixel(np.array([[10.0, 10.0], [20.0, 20.0]]),
                                np.array([-1.0, 1.0]), "left_camera", "left_eye", rig)
        assert list(ok) == [False, True]

    def test_composition_round_trip(self):
        rig = default_rig()
        rng = np.random.default_rng(11)
        pix = rng.uniform([50, 50], [589, 429], size=(200, 2))
        d = rng.uniform(0.5, 6.0, 200)
        mid, ok1 = reproject_pixel(pix, d, "left_camera", "left_eye", rig)
        # depth of the same 3-D point as seen from the eye
        from vstbench.geometry import destination_depth

        d_eye = destination_depth(pix, d, "left_camera", "left_eye", rig)
        back, ok2 = reproject_pixel(mid, d_eye, "left_eye", "left_camera", rig)
        m = ok1 & ok2
        assert m.any()
        assert np.max(np.abs(back[m] - pix[m])) < 1e-6


class TestPlaneHomography:
    def test_src_equals_dst_is_identity(self):
        rig = default_rig()
        h = plane_homography(rig, "left_camera", "left_camera", 2.0)
        assert np.allclose(h.matrix, np.eye(3), atol=1e-12)

    def test_pure_lateral_shift(self):
        # plane-induced homography reduces to a constant shift fx*t/d = 7.5 px
        rig = make_rig(cam_offset=(-0.03, 0.0, 0.0))
        h = plane_homography(rig, "left_camera", "left_eye", 2.0)
        pts = np.array([[100.0, 100.0], [320.0, 240.0], [600.0, 50.0]])
        out = h.apply(pts)
        assert np.allclose(out - pts, [[-7.5, 0.0]] * 3, atol=1e-9)

    def test_matches_reprojection_with_rotation(self):
        rot = Pose.rotation_y(np.deg2rad(10.0))
        rig = make_rig(cam_offset=(-0.04, 0.01, 0.02), cam_rotation=rot)
        d = 1.7
        h = plane_homography(rig, "left_camera", "left_eye", d)
        u, v = np.meshgrid(np.linspace(50, 589, 5), np.linspace(50, 429, 5))
        pix = np.stack([u, v], axis=-1)
        expected, ok = reproject_pixel(pix, np.full(u.shape, d), "left_camera", "left_eye", rig)
        assert ok.all()
        assert np.max(np.abs(h.apply(pix) - expected)) < 1e-6

    def test_dense_grid_agreement_default_rig(self):
        rig = default_rig()
        d = 2.0
        h = plane_homography(rig, "left_camera", "left_eye", d)
        u, v = np.meshgrid(np.linspace(0, 639, 33), np.linspace(0, 479, 25))
        pix = np.stack([u, v], axis=-1)
        expected, _ = reproject_pixel(pix, np.full(u.shape, d), "left_camera", "left_eye", rig)
        assert np.max(np.abs(h.apply(pix) - expected)) < 1e-6

    def test_invalid_distance(self):
        with pytest.raises(GeometryError):
            plane_homography(default_rig(), "left_camera", "left_eye", 0.0)


class TestTypes:
    def test_intrinsics_validation(self):
        with pytest.raises(GeometryError):
            CameraIntrinsics(-1, 500, 320, 240, 640, 480)
        with pytest.raises(GeometryError):
            CameraIntrinsics(500, 500, 320, 240, 1, 480)

    def test_pose_orthonormality_enforced(self):
        bad = np.eye(3) * 1.001
        with pytest.raises(GeometryError, match="orthonormal"):
            Pose(bad, np.zeros(3))
        with pytest.raises(GeometryError, match="determinant"):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_homography_normalized(self):
        h = Homography(np.diag([2.0, 2.0, 2.0]))
        assert h.matrix[2, 2] == 1.0
        assert np.allclose(h.matrix, np.eye(3))

    def test_homography_rejects_bad_bottom_right(self):
        m = np.eye(3)
        m[2, 2] = 1e-15
        with pytest.raises(GeometryError):
            Homography(m)

    def test_homography_rejects_singular(self):
        m = np.eye(3)
        m[0, 0] = 0.0
        with pytest.raises(GeometryError):
            Homography(m)

    def test_homography_apply_inverse(self):
        rng = np.random.default_rng(5)
        m = np.eye(3) + 0.01 * rng.standard_normal((3, 3))
        h = Homography(m)
        pts = rng.uniform(0, 500, (20, 2))
        assert np.max(np.abs(h.inverse().apply(h.apply(pts)) - pts)) < 1e-8


class TestRigIO:
    def test_round_trip(self, tmp_path):
        rig = default_rig()
        path = tmp_path / "rig.json"
        save_rig(rig, path)
        rig2 = load_rig(path)
        for name in ("left_camera", "right_camera", "left_eye", "right_eye"):
            a, b = rig.viewpoint(name), rig2.viewpoint(name)
            assert np.allclose(a.pose.rotation, b.pose.rotation)
            assert np.allclose(a.pose.translation, b.pose.translation)
            assert a.intrinsics == b.intrinsics

    def test_missing_key_reports_name(self):
        with pytest.raises(GeometryError, match="right_camera"):
            rig_from_dict({"viewpoints": {"left_camera": rig_to_dict(default_rig())["viewpoints"]["left_camera"]}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_rig(tmp_path / "nope.json")
