# --------------------------------------------------------
# 🖼️ scene.py — textured plane seen through a pinhole camera
# --------------------------------------------------------
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import cv2
import numpy as np
from scipy.ndimage import map_coordinates

from geometry import CameraPose, Intrinsics
from smm import MAX_INTENSITY, Image

DEFAULT_WORKING_DEPTH = 0.5   # m, plane distance in front of the world origin
DEFAULT_TEXTURE_SPAN = 0.4    # m, longest texture side when plane_scale is not given
_MISS = -10.0                 # texture coordinate far outside the picture


class EmptyRenderError(RuntimeError):
    """No camera ray meets the textured plane; the background image is attached."""

    def __init__(self, image: Image, message: str = "camera does not see the scene texture"):
        super().__init__(message)
        self.image = image


def _default_plane() -> CameraPose:
    return CameraPose(np.eye(3), np.array([0.0, 0.0, DEFAULT_WORKING_DEPTH]))


@dataclass(frozen=True, eq=False)
class PlanarScene:
    texture: Image
    plane_pose: CameraPose = field(default_factory=_default_plane)
    plane_scale: Optional[float] = None   # m per texture pixel
    background: float = 0.0

    def __post_init__(self):
        if self.texture.width == 0 or self.texture.height == 0:
            raise ValueError("scene texture must be non-empty")
        if self.plane_scale is None:
            object.__setattr__(self, "plane_scale",
                               DEFAULT_TEXTURE_SPAN / max(self.texture.width, self.texture.height))
        if not self.plane_scale > 0:
            raise ValueError(f"plane_scale must be > 0, got {self.plane_scale}")
        if not 0 <= self.background <= MAX_INTENSITY:
            raise ValueError("background intensity must lie in [0, 255]")

    @property
    def extent(self) -> Tuple[float, float]:
        """(width, height) of the textured area in meters."""
        return self.texture.width * self.plane_scale, self.texture.height * self.plane_scale


@dataclass(frozen=True, eq=False)
class OcclusionPatch:
    rect: Tuple[int, int, int, int]       # (u0, v0, width, height) in view pixels
    fill: Union[float, Image] = 0.0

    def __post_init__(self):
        if self.rect[2] <= 0 or self.rect[3] <= 0:
            raise ValueError("occlusion rectangle must have positive width and height")
        if not isinstance(self.fill, Image) and not 0 <= self.fill <= MAX_INTENSITY:
            raise ValueError("occlusion fill intensity must lie in [0, 255]")

    @classmethod
    def covering(cls, K: Intrinsics, fraction: float, fill: Union[float, Image] = 0.0,
                 anchor: Tuple[float, float] = (0.2, 0.2)) -> "OcclusionPatch":
        """Rectangle covering about `fraction` of the view, top-left corner at `anchor` (relative)."""
        if not 0 < fraction <= 1:
            raise ValueError("occluded fraction must lie in (0, 1]")
        w = max(1, min(K.width, int(round(K.width * np.sqrt(fraction)))))
        h = max(1, min(K.height, int(round(fraction * K.width * K.height / w))))
        u0 = min(int(round(anchor[0] * K.width)), K.width - w)
        v0 = min(int(round(anchor[1] * K.height)), K.height - h)
        return cls((u0, v0, w, h), fill)


# --------------------------------------------------------
# 🔦 Ray casting
# --------------------------------------------------------
def _texture_coordinates(scene: PlanarScene, camera: CameraPose, K: Intrinsics):
    """Texture (row, col) hit by every pixel ray plus the hit mask."""
    x, y = K.normalized_grid()
    rays = np.stack([x, y, np.ones_like(x)], axis=-1)

    r_plane = scene.plane_pose.rotation.T
    origin = r_plane @ (camera.translation - scene.plane_pose.translation)
    if abs(origin[2]) < 1e-12:
        raise ValueError("camera lies on the scene plane")
    dirs = rays @ (r_plane @ camera.rotation).T

    with np.errstate(divide="ignore", invalid="ignore"):
        s = -origin[2] / dirs[..., 2]
    valid = np.isfinite(s) & (s > 0)
    s = np.where(valid, s, 0.0)

    tex = scene.texture
    cols = (origin[0] + s * dirs[..., 0]) / scene.plane_scale + (tex.width - 1) / 2.0
    rows = (origin[1] + s * dirs[..., 1]) / scene.plane_scale + (tex.height - 1) / 2.0
    cols = np.where(valid, cols, _MISS)
    rows = np.where(valid, rows, _MISS)
    hit = valid & (cols > -1) & (cols < tex.width) & (rows > -1) & (rows < tex.height)
    return rows, cols, hit


def render_view(scene: PlanarScene, camera: CameraPose, K: Intrinsics) -> Image:
    """Bilinear render of the plane; rays that miss the texture see the background."""
    rows, cols, hit = _texture_coordinates(scene, camera, K)
    if not hit.any():
        raise EmptyRenderError(Image(np.full(K.shape, float(scene.background))))

    values = map_coordinates(scene.texture.intensities, [rows, cols], order=1,
                             mode="grid-constant", cval=float(scene.background))
    return Image(np.clip(values, 0.0, MAX_INTENSITY))


def view_coverage(scene: PlanarScene, camera: CameraPose, K: Intrinsics) -> float:
    """Fraction of pixels whose ray lands on the texture."""
    _, _, hit = _texture_coordinates(scene, camera, K)
    return float(hit.mean())


def framing_pose(scene: PlanarScene, K: Intrinsics) -> CameraPose:
    """Fronto-parallel pose at which one texture pixel spans one image pixel."""
    depth = K.focal_u * scene.plane_scale
    r = scene.plane_pose.rotation
    return CameraPose(r, scene.plane_pose.translation - depth * r[:, 2])


# --------------------------------------------------------
# 🩹 View-space perturbations
# --------------------------------------------------------
def apply_occlusion(img: Image, patch: OcclusionPatch) -> Image:
    """Overwrite the patch rectangle; every other pixel is left untouched."""
    u0, v0, w, h = patch.rect
    x0, x1 = max(0, u0), min(img.width, u0 + w)
    y0, y1 = max(0, v0), min(img.height, v0 + h)
    if x0 >= x1 or y0 >= y1:
        raise ValueError(f"occlusion {patch.rect} does not intersect the {img.width}x{img.height} view")

    out = img.intensities.copy()
    if isinstance(patch.fill, Image):
        fill = patch.fill.intensities
        if fill.shape != (h, w):
            fill = cv2.resize(fill, (w, h), interpolation=cv2.INTER_LINEAR)
        out[y0:y1, x0:x1] = fill[y0 - v0:y1 - v0, x0 - u0:x1 - u0]
    else:
        out[y0:y1, x0:x1] = float(patch.fill)
    return Image(np.clip(out, 0.0, MAX_INTENSITY))


def apply_luminance(img: Image, gain: float = 1.0, offset: float = 0.0) -> Image:
    """Global illumination change I' = gain·I + offset, clipped to the 8-bit range."""
    if gain <= 0:
        raise ValueError("luminance gain must be > 0")
    return Image(np.clip(gain * img.intensities + offset, 0.0, MAX_INTENSITY))
