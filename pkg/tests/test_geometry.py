import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.model.mesh import TrianglePatch
from app.model.scene import Camera, SparsePoint
from app.services.geometry import (
    estimate_resolution,
    estimate_resolution_batch,
    information_matrices,
    information_matrix,
    max_covariance_eigenvalue,
    project,
    project_points,
    triangulation_angle,
    triangulation_uncertainty,
)


def _patch(corners, index=0) -> TrianglePatch:
    corners = np.asarray(corners, dtype=np.float64)
    raw = np.cross(corners[1] - corners[0], corners[2] - corners[0])
    return TrianglePatch(
        index=index,
        corners=corners,
        centroid=corners.mean(axis=0),
        normal=raw / np.linalg.norm(raw),
        area3d=0.5 * float(np.linalg.norm(raw)),
    )


class TestCamera:
    def test_identity_rotation_is_accepted(self):
        camera = Camera(id=1, fx=100, fy=100, cx=50, cy=50, width=100, height=100,
                        R=(1, 0, 0, 0, 1, 0, 0, 0, 1), C=(0, 0, 0))
        assert np.allclose(camera.rotation, np.eye(3))

    def test_non_orthonormal_rotation_is_rejected(self):
        with pytest.raises(ValidationError):
            Camera(id=1, fx=100, fy=100, cx=50, cy=50, width=100, height=100,
                   R=(1.1, 0, 0, 0, 1, 0, 0, 0, 1), C=(0, 0, 0))

    def test_reflection_is_rejected(self):
        with pytest.raises(ValidationError):
            Camera(id=1, fx=100, fy=100, cx=50, cy=50, width=100, height=100,
                   R=(-1, 0, 0, 0, 1, 0, 0, 0, 1), C=(0, 0, 0))

    def test_non_positive_focal_is_rejected(self):
        with pytest.raises(ValidationError):
            Camera(id=1, fx=0, fy=100, cx=50, cy=50, width=100, height=100,
                   R=(1, 0, 0, 0, 1, 0, 0, 0, 1), C=(0, 0, 0))

    def test_track_needs_two_distinct_cameras(self):
        with pytest.raises(ValidationError):
            SparsePoint(xyz=(0, 0, 0), track=(3, 3))
        assert SparsePoint(xyz=(0, 0, 0), track=(4, 2, 4)).track == (2, 4)


class TestProjection:
    def test_point_on_axis_projects_to_principal_point(self, nadir_camera):
        pixel = project(nadir_camera, (0.5, 0.5, 0.0))
        assert pixel == pytest.approx([nadir_camera.cx, nadir_camera.cy])

    def test_point_behind_camera_is_none(self, nadir_camera):
        assert project(nadir_camera, (0.5, 0.5, 20.0)) is None

    def test_vectorized_matches_scalar(self, nadir_camera):
        points = np.array([[0.5, 0.5, 0.0], [1.0, 2.0, 1.0], [0.0, 0.0, 11.0]])
        pixels, depth = project_points(nadir_camera, points)
        assert depth[2] < 0 and np.isnan(pixels[2]).all()
        for i in range(2):
            assert pixels[i] == pytest.approx(project(nadir_camera, points[i]))


class TestResolution:
    def test_fronto_parallel_resolution_is_focal_over_depth_squared(self, make_camera):
        camera = make_camera(0, (0.0, 0.0, 10.0), focal=500.0)
        triangle = _patch([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
        assert estimate_resolution(camera, triangle) == pytest.approx((500.0 / 10.0) ** 2)

    def test_corner_behind_camera_gives_zero(self, make_camera):
        camera = make_camera(0, (0.0, 0.0, 10.0))
        triangle = _patch([[0, 0, 0], [1, 0, 0], [0, 1, 20]])
        assert estimate_resolution(camera, triangle) == 0.0

    def test_batch_matches_scalar(self, make_camera, plane_rig):
        mesh, cameras = plane_rig
        camera = cameras[2]
        batch = estimate_resolution_batch(camera, mesh.triangle_corners(), mesh.triangle_areas())
        scalar = [estimate_resolution(camera, p) for p in mesh.patches]
        assert batch == pytest.approx(scalar)

    def test_resolution_scales_with_inverse_depth_squared(self, make_camera):
        triangle = _patch([[0, 0, 0], [0.2, 0, 0], [0, 0.2, 0]])
        scaled = []
        for depth in (2.0, 5.0, 13.0, 40.0):
            camera = make_camera(0, (0.0, 0.0, depth), focal=800.0)
            scaled.append(estimate_resolution(camera, triangle) * depth ** 2)
        assert scaled == pytest.approx([scaled[0]] * len(scaled), rel=1e-6)


class TestUncertainty:
    def test_single_camera_is_infinite(self, make_camera):
        camera = make_camera(0, (0.0, 0.0, 10.0))
        assert math.isinf(triangulation_uncertainty([camera], (0, 0, 0), 1.0))

    def test_coincident_centers_are_singular(self, make_camera):
        a = make_camera(0, (0.0, 0.0, 10.0))
        b = make_camera(1, (0.0, 0.0, 10.0))
        assert math.isinf(triangulation_uncertainty([a, b], (0, 0, 0), 1.0))

    def test_more_cameras_never_increase_uncertainty(self, plane_rig):
        _, cameras = plane_rig
        point = (0.1, -0.2, 0.0)
        values = [triangulation_uncertainty(cameras[:n], point, 1.0) for n in range(2, len(cameras) + 1)]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(values, values[1:]))

    def test_uncertainty_scales_with_pixel_noise_squared(self, plane_rig):
        _, cameras = plane_rig
        base = triangulation_uncertainty(cameras, (0, 0, 0), 1.0)
        assert triangulation_uncertainty(cameras, (0, 0, 0), 2.0) == pytest.approx(4.0 * base)

    def test_stacked_information_matches_scalar(self, plane_rig):
        mesh, cameras = plane_rig
        points = mesh.centroids()[:5]
        stacked = information_matrices(cameras[0], points, 1.0)
        for i, point in enumerate(points):
            assert stacked[i] == pytest.approx(information_matrix(cameras[0], point, 1.0))

    def test_zero_information_is_singular(self):
        assert math.isinf(max_covariance_eigenvalue(np.zeros((1, 3, 3)))[0])

    def test_orthogonal_views_at_one_meter(self, make_camera):
        a = make_camera(0, (1.0, 0.0, 0.0), target=(0, 0, 0), focal=1000.0)
        b = make_camera(1, (0.0, 1.0, 0.0), target=(0, 0, 0), focal=1000.0)
        assert triangulation_uncertainty([a, b], (0, 0, 0), 1.0) == pytest.approx(1e-6, rel=1e-9)

    def test_uncertainty_grows_with_depth_squared(self, make_camera):
        scaled = []
        for depth in (1.0, 3.0, 10.0):
            a = make_camera(0, (depth, 0.0, depth), target=(0, 0, 0), focal=1000.0)
            b = make_camera(1, (-depth, 0.0, depth), target=(0, 0, 0), focal=1000.0)
            scaled.append(triangulation_uncertainty([a, b], (0, 0, 0), 1.0) / depth ** 2)
        assert scaled == pytest.approx([scaled[0]] * len(scaled), rel=1e-9)

    def test_invariant_under_rigid_transform(self, plane_rig):
        _, cameras = plane_rig
        point = np.array([0.3, -0.1, 0.05])
        rng = np.random.default_rng(12)
        q, r = np.linalg.qr(rng.normal(size=(3, 3)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        shift = rng.uniform(-50, 50, size=3)
        moved = [
            Camera.from_pose(c.id, c.rotation @ q.T, q @ c.center + shift, c.fx, (c.width, c.height))
            for c in cameras
        ]
        before = triangulation_uncertainty(cameras, point, 1.0)
        after = triangulation_uncertainty(moved, q @ point + shift, 1.0)
        assert after == pytest.approx(before, rel=1e-9)


class TestTriangulationAngle:
    def test_right_angle(self, make_camera):
        a = make_camera(0, (1.0, 0.0, 0.0), target=(0, 0, 0))
        b = make_camera(1, (0.0, 1.0, 0.0), target=(0, 0, 0))
        assert triangulation_angle(a, b, (0, 0, 0)) == pytest.approx(90.0)

    def test_identical_centers_give_zero(self, make_camera):
        a = make_camera(0, (0.0, 0.0, 5.0))
        b = make_camera(1, (0.0, 0.0, 5.0))
        assert triangulation_angle(a, b, (0, 0, 0)) == 0.0
