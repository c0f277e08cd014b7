import numpy as np
import pytest

from geometry import (CameraPose, Intrinsics, Twist, integrate_twist, normalized_to_pixel,
                      pixel_to_normalized, pose_error, pose_from_euler, pose_from_euler_deg,
                      se3_exp, so3_exp)

GENERIC_TWIST = Twist.from_vector([0.12, -0.05, 0.2, 0.3, -0.2, 0.45])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestPoseFromEuler:
    def test_zero_is_identity(self):
        pose = pose_from_euler(0, 0, 0, 0, 0, 0)
        np.testing.assert_array_equal(pose.rotation, np.eye(3))
        np.testing.assert_array_equal(pose.translation, np.zeros(3))

    def test_pure_translation(self):
        pose = pose_from_euler(1, 2, 3, 0, 0, 0)
        np.testing.assert_array_equal(pose.rotation, np.eye(3))
        np.testing.assert_array_equal(pose.translation, [1, 2, 3])

    def test_quarter_turn_about_z_maps_x_to_y(self):
        pose = pose_from_euler(0, 0, 0, 0, 0, np.pi / 2)
        np.testing.assert_allclose(pose.rotation @ [1, 0, 0], [0, 1, 0], atol=1e-12)

    def test_product_order_is_x_then_y_then_z(self):
        a, b, g = 0.3, -0.4, 1.1
        rx = pose_from_euler(0, 0, 0, a, 0, 0).rotation
        ry = pose_from_euler(0, 0, 0, 0, b, 0).rotation
        rz = pose_from_euler(0, 0, 0, 0, 0, g).rotation
        np.testing.assert_allclose(pose_from_euler(0, 0, 0, a, b, g).rotation, rx @ ry @ rz, atol=1e-14)

    def test_determinant_is_one(self, rng):
        for angles in rng.uniform(-np.pi, np.pi, (50, 3)):
            assert abs(np.linalg.det(pose_from_euler(0, 0, 0, *angles).rotation) - 1.0) < 1e-9

    def test_euler_deg_inverts_construction(self):
        pose = pose_from_euler_deg(0.1, 0.2, 0.3, 10.0, -20.0, 30.0)
        np.testing.assert_allclose(pose.euler_deg(), (10.0, -20.0, 30.0), atol=1e-9)

    def test_non_finite_angle_rejected(self):
        with pytest.raises(ValueError):
            pose_from_euler(0, 0, 0, np.nan, 0, 0)


class TestPixelToNormalized:
    K = Intrinsics(200.0, 200.0, 50.0, 50.0, 101, 101)

    def test_principal_point_is_origin(self):
        assert pixel_to_normalized(50.0, 50.0, self.K) == (0.0, 0.0)

    def test_one_focal_length_is_unit(self):
        x, _ = pixel_to_normalized(250.0, 50.0, self.K)
        assert x == pytest.approx(1.0)

    def test_direct_substitution(self):
        x, _ = pixel_to_normalized(150.0, 50.0, self.K)
        assert x == pytest.approx(0.5)

    def test_round_trip(self, rng):
        u, v = rng.uniform(0, 100, (2, 200))
        x, y = pixel_to_normalized(u, v, self.K)
        uu, vv = normalized_to_pixel(x, y, self.K)
        np.testing.assert_allclose(uu, u, atol=1e-9)
        np.testing.assert_allclose(vv, v, atol=1e-9)


class TestIntrinsics:
    def test_centered(self):
        K = Intrinsics.centered(50, 40, 12.5)
        assert (K.center_u, K.center_v) == (24.5, 19.5)
        assert K.shape == (40, 50)

    @pytest.mark.parametrize("kwargs", [
        dict(focal_u=0.0, focal_v=1.0, center_u=1.0, center_v=1.0, width=4, height=4),
        dict(focal_u=1.0, focal_v=1.0, center_u=4.0, center_v=1.0, width=4, height=4),
        dict(focal_u=1.0, focal_v=1.0, center_u=0.0, center_v=0.0, width=0, height=4),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            Intrinsics(**kwargs)


class TestPoseTypes:
    def test_non_orthonormal_rotation_rejected(self):
        with pytest.raises(ValueError):
            CameraPose(np.diag([1.0, 1.0, 1.1]), np.zeros(3))

    def test_reflection_rejected(self):
        with pytest.raises(ValueError):
            CameraPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_non_finite_twist_rejected(self):
        with pytest.raises(ValueError):
            Twist.from_vector([0, 0, np.inf, 0, 0, 0])

    def test_inverse_composes_to_identity(self):
        pose = pose_from_euler_deg(0.3, -0.2, 0.1, 5, 10, -15)
        both = pose.compose(pose.inverse())
        np.testing.assert_allclose(both.as_matrix(), np.eye(4), atol=1e-12)

    def test_pose_error_of_reference_is_zero(self):
        pose = pose_from_euler_deg(0.3, -0.2, 0.1, 5, 10, -15)
        np.testing.assert_allclose(pose_error(pose, pose), np.zeros(6), atol=1e-9)

    def test_pose_error_against_identity_reads_the_pose(self):
        pose = pose_from_euler_deg(0.3, -0.2, 0.1, 5, 10, -15)
        np.testing.assert_allclose(pose_error(pose, CameraPose.identity()),
                                   [0.3, -0.2, 0.1, 5, 10, -15], atol=1e-9)


class TestExponential:
    def test_so3_small_angle_branch(self):
        np.testing.assert_allclose(so3_exp([1e-10, 0, 0]), np.eye(3), atol=1e-9)

    def test_se3_pure_translation(self):
        pose = se3_exp([1.0, 2.0, 3.0, 0, 0, 0])
        np.testing.assert_allclose(pose.translation, [1, 2, 3])
        np.testing.assert_array_equal(pose.rotation, np.eye(3))


class TestIntegrateTwist:
    def test_zero_twist_returns_input(self):
        pose = pose_from_euler_deg(0.1, 0.2, 0.3, 1, 2, 3)
        assert integrate_twist(pose, Twist.zero(), 0.7) is pose

    def test_quarter_turn(self):
        pose = integrate_twist(CameraPose.identity(), Twist.from_vector([0, 0, 0, 0, 0, np.pi / 2]), 1.0)
        np.testing.assert_allclose(pose.rotation, rot_z(np.pi / 2), atol=1e-12)
        np.testing.assert_allclose(pose.translation, np.zeros(3), atol=1e-12)

    def test_fine_steps_agree_with_one_step(self):
        start = pose_from_euler_deg(0.1, -0.1, 0.2, 3, -4, 5)
        coarse = integrate_twist(start, GENERIC_TWIST, 1.0)
        fine = start
        for _ in range(1000):
            fine = integrate_twist(fine, GENERIC_TWIST, 1e-3)
        np.testing.assert_allclose(fine.translation, coarse.translation, atol=1e-4)
        rel = coarse.rotation.T @ fine.rotation
        angle = np.arccos(np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0))
        assert angle < 1e-4
        assert np.max(np.abs(fine.rotation.T @ fine.rotation - np.eye(3))) <= 1e-9

    def test_one_parameter_subgroup(self):
        start = pose_from_euler_deg(0.1, -0.1, 0.2, 3, -4, 5)
        whole = integrate_twist(start, GENERIC_TWIST, 0.7)
        split = integrate_twist(integrate_twist(start, GENERIC_TWIST, 0.3), GENERIC_TWIST, 0.4)
        np.testing.assert_allclose(split.as_matrix(), whole.as_matrix(), atol=1e-9)

    @pytest.mark.parametrize("dt", [0.0, -1.0, np.nan])
    def test_bad_dt(self, dt):
        with pytest.raises(ValueError):
            integrate_twist(CameraPose.identity(), GENERIC_TWIST, dt)
