import numpy as np
import pytest

from geometry import CameraPose, Intrinsics, pose_from_euler_deg
from scene import (EmptyRenderError, OcclusionPatch, PlanarScene, apply_luminance, apply_occlusion,
                   framing_pose, render_view, view_coverage)
from smm import Image
from textures import blob_texture
from tests.conftest import wave_texture


class TestRenderView:
    def test_framing_pose_reproduces_texture(self):
        tex = wave_texture(24)
        scene = PlanarScene(tex, plane_scale=0.01)
        K = Intrinsics.centered(24, 24, 24.0)
        img = render_view(scene, framing_pose(scene, K), K)
        np.testing.assert_allclose(img.intensities, tex.intensities, atol=1e-6)
        assert view_coverage(scene, framing_pose(scene, K), K) == 1.0

    def test_default_scene_fills_default_view(self):
        scene = PlanarScene(blob_texture(210))
        K = Intrinsics.centered(50, 50, 62.5)
        assert scene.extent == pytest.approx((0.4, 0.4))
        assert view_coverage(scene, CameraPose.identity(), K) > 0.95

    def test_looking_away_is_empty(self):
        scene = PlanarScene(blob_texture(64), background=12.0)
        K = Intrinsics.centered(16, 16, 16.0)
        away = pose_from_euler_deg(0, 0, 0, 180.0, 0, 0)
        with pytest.raises(EmptyRenderError) as info:
            render_view(scene, away, K)
        assert np.all(info.value.image.intensities == 12.0)

    def test_partial_view_shows_background(self):
        scene = PlanarScene(wave_texture(32), plane_scale=0.01, background=0.0)
        K = Intrinsics.centered(32, 32, 32.0)
        shifted = framing_pose(scene, K).compose(pose_from_euler_deg(0.16, 0, 0, 0, 0, 0))
        coverage = view_coverage(scene, shifted, K)
        assert 0.4 < coverage < 0.6
        img = render_view(scene, shifted, K)
        assert np.all(img.intensities[:, -5:] == 0.0)

    def test_camera_on_plane_rejected(self):
        scene = PlanarScene(blob_texture(32))
        on_plane = CameraPose(np.eye(3), scene.plane_pose.translation)
        with pytest.raises(ValueError):
            render_view(scene, on_plane, Intrinsics.centered(8, 8, 8.0))

    def test_invalid_scene(self):
        with pytest.raises(ValueError):
            PlanarScene(blob_texture(16), plane_scale=-1.0)

    def test_sideways_move_shifts_the_view(self, framed):
        scene, K, pose = framed
        base = render_view(scene, pose, K).intensities
        step = pose_from_euler_deg(10 * scene.plane_scale, 0, 0, 0, 0, 0)
        moved = render_view(scene, pose.compose(step), K).intensities
        depth = scene.plane_pose.translation[2] - pose.translation[2]
        expected = 10 * K.focal_u * scene.plane_scale / depth

        def correlation(k):
            a, b = (moved[:, :K.width - k], base[:, k:]) if k >= 0 else (moved[:, -k:], base[:, :K.width + k])
            return np.corrcoef(a.ravel(), b.ravel())[0, 1]

        shifts = list(range(-12, 13))
        assert shifts[int(np.argmax([correlation(k) for k in shifts]))] == round(expected) == 10

    def test_coverage_drops_with_lateral_offset(self, framed):
        scene, K, pose = framed
        coverage = [view_coverage(scene, pose.compose(pose_from_euler_deg(tx, 0, 0, 0, 0, 0)), K)
                    for tx in np.linspace(0.0, 0.5, 11)]
        assert coverage[0] == 1.0
        assert np.all(np.diff(coverage) <= 0)
        assert coverage[-1] < 0.1


class TestOcclusion:
    def test_only_rectangle_changes(self):
        img = Image(np.full((10, 10), 100.0))
        out = apply_occlusion(img, OcclusionPatch((2, 3, 4, 2), fill=0.0))
        assert np.all(out.intensities[3:5, 2:6] == 0.0)
        mask = np.ones((10, 10), bool)
        mask[3:5, 2:6] = False
        assert np.all(out.intensities[mask] == 100.0)

    def test_image_fill(self):
        img = Image(np.zeros((8, 8)))
        patch = OcclusionPatch((0, 0, 4, 4), fill=Image(np.full((2, 2), 200.0)))
        out = apply_occlusion(img, patch)
        np.testing.assert_allclose(out.intensities[:4, :4], 200.0)

    def test_clipped_to_view(self):
        out = apply_occlusion(Image(np.zeros((6, 6))), OcclusionPatch((4, 4, 5, 5), fill=50.0))
        assert out.intensities[5, 5] == 50.0
        assert out.intensities[3, 3] == 0.0

    def test_outside_view_rejected(self):
        with pytest.raises(ValueError):
            apply_occlusion(Image(np.zeros((6, 6))), OcclusionPatch((10, 10, 2, 2)))

    def test_covering_fraction(self):
        K = Intrinsics.centered(50, 50, 12.5)
        patch = OcclusionPatch.covering(K, 0.15)
        u0, v0, w, h = patch.rect
        assert abs(w * h / 2500.0 - 0.15) < 0.01
        assert u0 + w <= 50 and v0 + h <= 50

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            OcclusionPatch.covering(Intrinsics.centered(8, 8, 8.0), 0.0)

    def test_full_black_cover(self, rng):
        K = Intrinsics.centered(50, 50, 12.5)
        img = Image(rng.uniform(1.0, 255.0, (50, 50)))
        out = apply_occlusion(img, OcclusionPatch.covering(K, 1.0, fill=0.0))
        assert np.all(out.intensities == 0.0)

    def test_patch_changes_exactly_its_pixels(self, rng):
        K = Intrinsics.centered(50, 50, 12.5)
        img = Image(rng.uniform(1.0, 255.0, (50, 50)))
        patch = OcclusionPatch.covering(K, 0.15)
        changed = np.count_nonzero(apply_occlusion(img, patch).intensities != img.intensities)
        assert changed == patch.rect[2] * patch.rect[3]
        assert abs(changed / 2500.0 - 0.15) < 0.01


class TestLuminance:
    def test_gain_and_offset_clip(self):
        out = apply_luminance(Image(np.array([[10.0, 200.0]])), gain=1.5, offset=-20.0)
        np.testing.assert_allclose(out.intensities, [[0.0, 255.0]])

    def test_identity(self):
        img = Image(np.array([[10.0, 200.0]]))
        np.testing.assert_array_equal(apply_luminance(img).intensities, img.intensities)

    def test_non_positive_gain(self):
        with pytest.raises(ValueError):
            apply_luminance(Image(np.zeros((2, 2))), gain=0.0)
