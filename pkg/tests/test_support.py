import numpy as np
import pytest

from convergence import (decay_violation_fraction, decays_exponentially, summarize,
                         velocity_smoothness, within_tolerance)
from geometry import CameraPose, Twist, pose_from_euler_deg
from image_utils import (export_gradient, export_smm, load_grid_csv, load_image, load_texture,
                         minmax_uint8, save_image)
from servo import ServoRecord, ServoStatus, ServoTrace
from smm import Image, SmmGradient
from textures import TEXTURES, blob_texture, constant_texture, low_texture, mirrored
from trace_store import TRACE_COLUMNS, read_trace, write_report, write_trace


class TestTextures:
    @pytest.mark.parametrize("name", sorted(TEXTURES))
    def test_registry_is_deterministic_and_in_range(self, name):
        a, b = TEXTURES[name](64), TEXTURES[name](64)
        np.testing.assert_array_equal(a.intensities, b.intensities)
        assert a.shape == (64, 64)
        assert a.intensities.min() >= 0 and a.intensities.max() <= 255

    def test_low_texture_has_low_contrast(self):
        assert np.ptp(low_texture(64).intensities) < np.ptp(blob_texture(64).intensities)

    def test_constant(self):
        assert np.ptp(constant_texture(8).intensities) == 0

    def test_mirrored_is_symmetric(self):
        img = mirrored(blob_texture(32))
        np.testing.assert_array_equal(img.intensities, img.intensities[:, ::-1])


class TestImageIO:
    def test_pgm_round_trip(self, tmp_path, rng):
        values = rng.integers(0, 256, (7, 9)).astype(float)
        path = save_image(Image(values), str(tmp_path / "img.pgm"))
        np.testing.assert_array_equal(load_image(path).intensities, values)

    def test_png_round_trip(self, tmp_path):
        values = np.arange(12, dtype=float).reshape(3, 4) * 20
        path = save_image(values, str(tmp_path / "img.png"))
        np.testing.assert_array_equal(load_image(path).intensities, values)

    def test_unsupported_extension(self, tmp_path):
        with pytest.raises(ValueError, match="Unsupported"):
            load_image(str(tmp_path / "img.jpg"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(str(tmp_path / "nope.pgm"))

    def test_load_texture_by_name_or_path(self, tmp_path):
        assert load_texture("low", 32).shape == (32, 32)
        path = save_image(np.full((5, 6), 9.0), str(tmp_path / "t.pgm"))
        assert load_texture(path).shape == (5, 6)

    def test_minmax_stretch(self):
        out = minmax_uint8(np.array([[-1.0, 0.0, 1.0]]))
        assert out.dtype == np.uint8
        assert (out.min(), out.max()) == (0, 255)

    def test_grid_csv_exports(self, tmp_path):
        grad = SmmGradient(np.array([[1e-7, 2.5]]), np.array([[-3.0, 4.0]]))
        export_gradient(grad, str(tmp_path / "g"))
        np.testing.assert_allclose(load_grid_csv(str(tmp_path / "g_du.csv")), grad.du, rtol=1e-11)
        assert (tmp_path / "g_dv.pgm").is_file()


class TestConvergenceScores:
    def test_geometric_decay_has_no_violations(self):
        norms = 0.7 ** np.arange(40)
        assert decay_violation_fraction(norms) == 0.0
        assert decays_exponentially(norms)

    def test_warmup_is_ignored(self):
        norms = np.concatenate([[1.0, 2.0], 0.8 ** np.arange(1, 39)])
        assert decay_violation_fraction(norms) == 0.0

    def test_stalled_run_violates(self):
        assert not decays_exponentially(np.ones(30))

    def test_smoothness(self):
        assert velocity_smoothness(np.ones((10, 6))) == 0.0
        ramp = np.outer(np.arange(10.0), np.ones(6))
        assert velocity_smoothness(ramp) == 0.0
        zigzag = np.outer((-1.0) ** np.arange(10), np.ones(6))
        assert velocity_smoothness(zigzag) == pytest.approx(4.0)

    def test_tolerance(self):
        err = [0.004, -0.009, 0.2, 0.0, 0.0, -0.3]
        assert within_tolerance(err, 0.01, 0.5, axes=(0, 1, 5))
        assert not within_tolerance(err, 0.01, 0.5)

    def test_summary(self):
        row = summarize(np.arange(6.0), [3.0, 1.0])
        assert row["err_gamma_deg"] == 5.0
        assert row["final_err_norm"] == 1.0


class TestTraceStore:
    def trace(self):
        pose = pose_from_euler_deg(0.1, 0.0, -0.05, 0, 0, 8.0)
        records = [
            ServoRecord(0, pose, Twist.from_vector([-0.1, 0, 0, 0, 0, -0.02]), 2.0),
            ServoRecord(1, pose, Twist.zero(), 0.001),
        ]
        return ServoTrace(desired_pose=CameraPose.identity(), records=records, status=ServoStatus.CONVERGED)

    def test_header_rows_and_status(self, tmp_path):
        path = write_trace(self.trace(), str(tmp_path / "trace.csv"))
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == ",".join(TRACE_COLUMNS)
        assert lines[-1] == "# status=converged"
        df = read_trace(path)
        assert len(df) == 2
        assert df.attrs["status"] == "converged"
        assert df["gamma_deg"].iloc[0] == pytest.approx(8.0)
        assert df["vx"].iloc[0] == pytest.approx(-0.1)

    def test_report(self, tmp_path):
        path = write_report([{"case": "a", "status": "converged"}], str(tmp_path / "r" / "report.csv"))
        with open(path, encoding="utf-8") as fh:
            assert fh.readline().strip() == "case,status"
