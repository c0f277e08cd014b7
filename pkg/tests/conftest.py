import numpy as np
import pytest

import settings
from geometry import CameraPose, Intrinsics
from scene import PlanarScene, framing_pose
from smm import Image, SmmConfig


@pytest.fixture(autouse=True)
def quiet_console():
    settings.quiet(True)
    yield
    settings.quiet(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_image(rng):
    return Image(rng.uniform(0.0, 255.0, (16, 16)))


@pytest.fixture
def smm_cfg():
    return SmmConfig()


def wave_texture(size: int = 64) -> Image:
    """Smooth analytic texture: long wavelengths plus a ramp, well inside [0, 255]."""
    v, u = np.mgrid[0:size, 0:size].astype(float)
    field = 128.0 + 50.0 * np.sin(2 * np.pi * u / 61.0 + 0.3) * np.cos(2 * np.pi * v / 53.0) \
        + 0.4 * (u - size / 2.0)
    return Image(field)


@pytest.fixture
def framed():
    """32x32 view of a 64x64 smooth texture, one texture pixel per image pixel."""
    scene = PlanarScene(wave_texture(64), plane_scale=0.01)
    K = Intrinsics.centered(32, 32, 32.0)
    return scene, K, framing_pose(scene, K)
