# --------------------------------------------------------
# 📐 geometry.py — SE(3) poses, twists, intrinsics and projection
# --------------------------------------------------------
"""
Kinematic substrate of the simulated camera.

Conventions (these vary between libraries, so they are fixed here):

* Camera frame: +x right, +y down, +z along the optical axis.
* ``CameraPose`` maps camera coordinates to world coordinates:
  ``p_world = R @ p_cam + t``.
* Euler angles follow ``R = R_x(alpha) @ R_y(beta) @ R_z(gamma)``
  (intrinsic X-Y-Z).
* Twists are expressed in the camera frame and integrated by
  right-composition: ``T_next = T @ exp(dt * twist)``.
"""
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

ORTHO_TOL = 1e-9
SMALL_ANGLE = 1e-8


def _as_vector(values, size: int, name: str) -> np.ndarray:
    vec = np.asarray(values, dtype=float).reshape(-1)
    if vec.shape != (size,):
        raise ValueError(f"{name} must have {size} components, got shape {vec.shape}")
    return vec


def skew(w: Sequence[float]) -> np.ndarray:
    """3x3 cross-product matrix of w."""
    wx, wy, wz = w
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])


def _orthonormal_error(r: np.ndarray) -> float:
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


def reorthonormalize(r: np.ndarray) -> np.ndarray:
    """Closest rotation matrix (SVD projection)."""
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


# --------------------------------------------------------
# 🧱 Value types
# --------------------------------------------------------
@dataclass(frozen=True, eq=False)
class CameraPose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = _as_vector(self.translation, 3, "translation")
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("pose entries must be finite")
        if _orthonormal_error(r) > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation must be orthonormal with det(R) = +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "CameraPose":
        m = np.asarray(m, dtype=float)
        return cls(rotation=m[:3, :3], translation=m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "CameraPose") -> "CameraPose":
        """self ∘ other (other expressed in self's frame)."""
        r = self.rotation @ other.rotation
        if _orthonormal_error(r) > ORTHO_TOL:
            r = reorthonormalize(r)
        return CameraPose(r, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "CameraPose":
        rt = self.rotation.T
        return CameraPose(rt, -rt @ self.translation)

    def euler_deg(self) -> Tuple[float, float, float]:
        """(alpha, beta, gamma) in degrees, inverse of pose_from_euler."""
        angles = Rotation.from_matrix(self.rotation).as_euler("XYZ", degrees=True)
        return tuple(float(a) for a in angles)

    def as_row(self) -> Tuple[float, ...]:
        """(tx, ty, tz, alpha_deg, beta_deg, gamma_deg) for trace files."""
        return tuple(float(v) for v in self.translation) + self.euler_deg()


@dataclass(frozen=True, eq=False)
class Twist:
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        v = _as_vector(self.linear, 3, "linear")
        w = _as_vector(self.angular, 3, "angular")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise ValueError("twist components must be finite")
        v.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "linear", v)
        object.__setattr__(self, "angular", w)

    @classmethod
    def zero(cls) -> "Twist":
        return cls()

    @classmethod
    def from_vector(cls, xi: Sequence[float]) -> "Twist":
        xi = _as_vector(xi, 6, "twist")
        return cls(linear=xi[:3], angular=xi[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    def is_zero(self) -> bool:
        return not np.any(self.linear) and not np.any(self.angular)


@dataclass(frozen=True)
class Intrinsics:
    focal_u: float
    focal_v: float
    center_u: float
    center_v: float
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (self.focal_u > 0 and self.focal_v > 0):
            raise ValueError("focal lengths must be > 0")
        if not (0 <= self.center_u < self.width and 0 <= self.center_v < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def centered(cls, width: int, height: int, focal: float) -> "Intrinsics":
        """Square pixels, principal point at the image centre."""
        return cls(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([
            [self.focal_u, 0.0, self.center_u],
            [0.0, self.focal_v, self.center_v],
            [0.0, 0.0, 1.0],
        ])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def normalized_grid(self) -> Tuple[np.ndarray, np.ndarray]:
        """Normalized (x, y) of every pixel centre, each shaped (height, width)."""
        v, u = np.mgrid[0:self.height, 0:self.width].astype(float)
        return pixel_to_normalized(u, v, self)


# --------------------------------------------------------
# 🔁 Operations
# --------------------------------------------------------
def pose_from_euler(tx: float, ty: float, tz: float,
                    alpha: float, beta: float, gamma: float) -> CameraPose:
    """Pose with R = R_x(alpha) R_y(beta) R_z(gamma), angles in radians."""
    angles = np.array([alpha, beta, gamma], dtype=float)
    if not np.all(np.isfinite(angles)):
        raise ValueError("Euler angles must be finite")

    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rz = np.array([[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]])
    return CameraPose(rx @ ry @ rz, np.array([tx, ty, tz], dtype=float))


def pose_from_euler_deg(tx: float, ty: float, tz: float,
                        alpha_deg: float, beta_deg: float, gamma_deg: float) -> CameraPose:
    return pose_from_euler(tx, ty, tz, *np.radians([alpha_deg, beta_deg, gamma_deg]))


def pixel_to_normalized(u, v, K: Intrinsics):
    return (u - K.center_u) / K.focal_u, (v - K.center_v) / K.focal_v


def normalized_to_pixel(x, y, K: Intrinsics):
    return x * K.focal_u + K.center_u, y * K.focal_v + K.center_v


def so3_exp(omega: Sequence[float]) -> np.ndarray:
    """Rodrigues' formula with a series fallback for tiny angles."""
    w = _as_vector(omega, 3, "omega")
    theta = float(np.linalg.norm(w))
    wx = skew(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) + wx + 0.5 * (wx @ wx)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * wx + b * (wx @ wx)


def se3_exp(xi: Sequence[float]) -> CameraPose:
    """Exponential of a (v, w) twist vector."""
    xi = _as_vector(xi, 6, "twist")
    v, w = xi[:3], xi[3:]
    theta = float(np.linalg.norm(w))
    wx = skew(w)
    if theta < SMALL_ANGLE:
        jac = np.eye(3) + 0.5 * wx + (wx @ wx) / 6.0
    else:
        jac = (np.eye(3)
               + (1.0 - np.cos(theta)) / theta**2 * wx
               + (theta - np.sin(theta)) / theta**3 * (wx @ wx))
    r = so3_exp(w)
    if _orthonormal_error(r) > ORTHO_TOL:
        r = reorthonormalize(r)
    return CameraPose(r, jac @ v)


def integrate_twist(pose: CameraPose, twist: Twist, dt: float) -> CameraPose:
    """Hold a camera-frame twist for dt seconds."""
    if not (dt > 0 and np.isfinite(dt)):
        raise ValueError(f"dt must be a positive finite number, got {dt}")
    if twist.is_zero():
        return pose
    return pose.compose(se3_exp(dt * twist.as_vector()))


def pose_error(pose: CameraPose, reference: CameraPose) -> np.ndarray:
    """reference⁻¹ ∘ pose as (tx, ty, tz, alpha_deg, beta_deg, gamma_deg)."""
    rel = reference.inverse().compose(pose)
    return np.array(rel.as_row())
