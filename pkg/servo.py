# --------------------------------------------------------
# 🎯 servo.py — interaction matrices, control law and the servo loop
# --------------------------------------------------------
"""
Closed-loop servoing on dense SMM features.

Two interaction models are available:

* ``component``: every pixel component changes through its own
  intensity (photometric constancy at the component's location), so a
  row sums −π_i ∂φ_i/∂σ · dσ/dI · ∇I(μ_i)ᵀ L_x(μ_i) over components.
* ``gradient``: the SMM surface itself obeys constancy, so a row is
  −∇S(x)ᵀ L_x(x).
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, field_validator

from geometry import CameraPose, Intrinsics, Twist, integrate_twist
from scene import (EmptyRenderError, OcclusionPatch, PlanarScene, apply_luminance,
                   apply_occlusion, render_view)
from settings import console
from smm import (Image, SmmConfig, SmmGradient, components_from_image, sigma_sensitivity_field,
                 smm_gradient, smm_of_image)

DOF_NAMES = ("vx", "vy", "vz", "wx", "wy", "wz")
FULL_MASK = (True,) * 6
PLANAR_MASK = (True, True, False, False, False, True)
RANK_TOLERANCE = 1e-6

ErrorVector = np.ndarray


class DegenerateViewError(ValueError):
    """The desired view carries no usable content (zero interaction matrix)."""


class ServoStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


def dof_mask_from_names(names: Sequence[str]) -> Tuple[bool, ...]:
    unknown = set(names) - set(DOF_NAMES)
    if unknown:
        raise ValueError(f"unknown degrees of freedom: {sorted(unknown)}")
    return tuple(name in names for name in DOF_NAMES)


# --------------------------------------------------------
# ⚙️ Controller configuration
# --------------------------------------------------------
class ControllerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    gain: float = Field(0.8, gt=0, validation_alias=AliasChoices("gain", "lambda"))
    dt: float = Field(1.0, gt=0)
    max_iters: int = Field(300, ge=1)
    convergence_ratio: float = Field(1e-3, gt=0, lt=1)
    dof_mask: Tuple[bool, bool, bool, bool, bool, bool] = FULL_MASK
    divergence_factor: float = Field(10.0, gt=1)
    interaction_model: Literal["component", "gradient"] = "component"
    interaction_source: Literal["desired", "current"] = "desired"
    feature: Literal["smm", "intensity"] = "smm"
    log_every: int = Field(10, ge=1)

    @field_validator("dof_mask")
    @classmethod
    def _some_dof(cls, v):
        if not any(v):
            raise ValueError("dof_mask must enable at least one degree of freedom")
        return v


# --------------------------------------------------------
# 🧮 Interaction matrices
# --------------------------------------------------------
@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    matrix: np.ndarray        # (k, 6), rows in row-major pixel order
    shape: Tuple[int, int]    # (height, width) of the generating image

    def __post_init__(self):
        if self.matrix.shape != (self.shape[0] * self.shape[1], 6):
            raise ValueError(f"interaction matrix must be k x 6 with k = {self.shape[0] * self.shape[1]}")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("interaction matrix entries must be finite")

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    def scaled(self, scale: float) -> "InteractionMatrix":
        return InteractionMatrix(self.matrix * scale, self.shape)

    def is_zero(self) -> bool:
        return not np.any(self.matrix)


def _check_depth(Z: float):
    if Z == 0:
        raise ValueError("depth Z must be non-zero (point on the camera plane)")


def _lx_rows(x, y, Z: float) -> Tuple[np.ndarray, np.ndarray]:
    """Both rows of L_x for arrays of normalized points, each shaped (..., 6)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inv_z = np.full_like(x, 1.0 / Z)
    zero = np.zeros_like(x)
    row_u = np.stack([-inv_z, zero, x * inv_z, x * y, -(1.0 + x * x), y], axis=-1)
    row_v = np.stack([zero, -inv_z, y * inv_z, 1.0 + y * y, -x * y, -x], axis=-1)
    return row_u, row_v


def point_interaction_matrix(x: float, y: float, Z: float) -> np.ndarray:
    """2x6 L_x of a normalized image point at depth Z."""
    _check_depth(Z)
    row_u, row_v = _lx_rows(x, y, Z)
    return np.stack([row_u, row_v])


def smm_interaction_row(grad, x: float, y: float, Z: float) -> np.ndarray:
    """−[dS/dx, dS/dy] · L_x(x, y, Z)."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient must be finite")
    return -grad @ point_interaction_matrix(x, y, Z)


def _masked(matrix: np.ndarray, dof_mask: Sequence[bool]) -> np.ndarray:
    matrix[:, ~np.asarray(dof_mask, dtype=bool)] = 0.0
    return matrix


def build_interaction_matrix(desired_smm_grad: SmmGradient, K: Intrinsics, Z: float,
                             dof_mask: Sequence[bool] = FULL_MASK) -> InteractionMatrix:
    """Stack −∇Sᵀ L_x per pixel from the desired view's gradient."""
    _check_depth(Z)
    if desired_smm_grad.du.size == 0:
        raise ValueError("gradient grid is empty")
    if desired_smm_grad.du.shape != K.shape:
        raise ValueError("gradient grid and intrinsics disagree on the image size")

    x, y = K.normalized_grid()
    row_u, row_v = _lx_rows(x.ravel(), y.ravel(), Z)
    matrix = -(desired_smm_grad.du.ravel()[:, None] * row_u + desired_smm_grad.dv.ravel()[:, None] * row_v)
    return InteractionMatrix(_masked(matrix, dof_mask), K.shape)


def image_gradient(img: Image, K: Intrinsics) -> SmmGradient:
    """Central-difference intensity gradient per normalized coordinate."""
    d_row, d_col = np.gradient(img.intensities)
    return SmmGradient(du=d_col * K.focal_u, dv=d_row * K.focal_v)


def build_component_interaction_matrix(desired: Image, K: Intrinsics, Z: float,
                                       dof_mask: Sequence[bool], smm_cfg: SmmConfig,
                                       workers: Optional[int] = None) -> InteractionMatrix:
    """Sum of per-component interaction matrices, each taken at the component's pixel."""
    _check_depth(Z)
    comps = components_from_image(desired, K, smm_cfg)
    grad = image_gradient(desired, K)
    x, y = K.normalized_grid()
    row_u, row_v = _lx_rows(x, y, Z)
    # intensity rate of each component per unit twist, mapped to a sigma rate
    loads = smm_cfg.sigma_per_intensity * (grad.du[..., None] * row_u + grad.dv[..., None] * row_v)
    field_ = sigma_sensitivity_field(comps, K, smm_cfg, np.moveaxis(loads, -1, 0), workers)
    matrix = -field_.reshape(6, -1).T
    return InteractionMatrix(_masked(matrix, dof_mask), K.shape)


def pseudo_inverse(L) -> np.ndarray:
    """Moore–Penrose inverse by SVD; singular values under 1e-6·max are dropped."""
    a = L.matrix if isinstance(L, InteractionMatrix) else np.asarray(L, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("cannot invert a matrix with non-finite entries")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > RANK_TOLERANCE * (s.max() if s.size else 0.0)
    s_inv = np.divide(1.0, s, out=np.zeros_like(s), where=keep)
    return vt.T @ (s_inv[:, None] * u.T)


def control_step(L_pinv: np.ndarray, e: ErrorVector, gain: float,
                 dof_mask: Sequence[bool] = FULL_MASK) -> Twist:
    """t_c = −λ L⁺ e with masked components forced to zero."""
    e = np.asarray(e, dtype=float).ravel()
    if L_pinv.shape != (6, e.size):
        raise ValueError(f"pseudo-inverse is {L_pinv.shape} but the error has {e.size} entries")
    xi = -gain * (L_pinv @ e)
    xi[~np.asarray(dof_mask, dtype=bool)] = 0.0
    return Twist.from_vector(xi)


def cost_value(e: ErrorVector) -> float:
    """E = ½ eᵀe."""
    e = np.asarray(e, dtype=float).ravel()
    return 0.5 * float(e @ e)


# --------------------------------------------------------
# 🔭 Features
# --------------------------------------------------------
def plane_depth(scene: PlanarScene, camera: CameraPose) -> float:
    """Distance to the scene plane along the camera's optical axis."""
    normal = scene.plane_pose.rotation[:, 2]
    axis_dot = float(normal @ camera.rotation[:, 2])
    if abs(axis_dot) < 1e-12:
        raise ValueError("optical axis is parallel to the scene plane")
    return float(normal @ (scene.plane_pose.translation - camera.translation)) / axis_dot


@dataclass
class FeatureModel:
    """Turns views into feature vectors and interaction matrices."""

    K: Intrinsics
    smm_cfg: SmmConfig
    ctrl_cfg: ControllerConfig
    workers: Optional[int] = None
    scale: float = 1.0

    def values(self, img: Image) -> np.ndarray:
        if self.ctrl_cfg.feature == "intensity":
            return img.intensities.ravel().copy()
        return smm_of_image(img, self.K, self.smm_cfg, self.workers).values.ravel() * self.scale

    def calibrate(self, desired: Image) -> np.ndarray:
        """Feature of the desired view; fixes the optional normalisation scale."""
        self.scale = 1.0
        s_star = self.values(desired)
        if self.ctrl_cfg.feature == "smm" and self.smm_cfg.normalize:
            self.scale = 1.0 / float(s_star.max())
            s_star = s_star * self.scale
        return s_star

    def interaction(self, img: Image, Z: float) -> InteractionMatrix:
        mask = self.ctrl_cfg.dof_mask
        if self.ctrl_cfg.feature == "intensity":
            return build_interaction_matrix(image_gradient(img, self.K), self.K, Z, mask)
        if self.ctrl_cfg.interaction_model == "component":
            L = build_component_interaction_matrix(img, self.K, Z, mask, self.smm_cfg, self.workers)
        else:
            smm = smm_of_image(img, self.K, self.smm_cfg, self.workers)
            L = build_interaction_matrix(smm_gradient(smm, self.smm_cfg, self.workers), self.K, Z, mask)
        return L.scaled(self.scale)


# --------------------------------------------------------
# 🔁 Servo loop
# --------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ServoRecord:
    iteration: int
    pose: CameraPose
    twist: Twist
    err_norm: float


@dataclass(eq=False)
class ServoTrace:
    desired_pose: CameraPose
    records: List[ServoRecord] = field(default_factory=list)
    status: Optional[ServoStatus] = None
    initial_image: Optional[Image] = None
    final_image: Optional[Image] = None
    desired_image: Optional[Image] = None

    @property
    def final_pose(self) -> CameraPose:
        return self.records[-1].pose

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    def err_norms(self) -> np.ndarray:
        return np.array([r.err_norm for r in self.records])

    def twists(self) -> np.ndarray:
        return np.array([r.twist.as_vector() for r in self.records]).reshape(-1, 6)


def run_servo(scene: PlanarScene, initial: CameraPose, desired: CameraPose, K: Intrinsics,
              smm_cfg: SmmConfig, ctrl_cfg: ControllerConfig,
              occlusion: Optional[OcclusionPatch] = None,
              luminance: Optional[Tuple[float, float]] = None,
              workers: Optional[int] = None) -> ServoTrace:
    """Render, compare, step and integrate until converged, stalled or diverged."""

    def observe(pose: CameraPose) -> Image:
        img = render_view(scene, pose, K)
        if luminance is not None:
            img = apply_luminance(img, *luminance)
        if occlusion is not None:
            img = apply_occlusion(img, occlusion)
        return img

    desired_img = render_view(scene, desired, K)
    if np.ptp(desired_img.intensities) == 0:
        raise DegenerateViewError("desired view is constant; the interaction matrix would carry no content")

    Z = plane_depth(scene, desired)
    model = FeatureModel(K, smm_cfg, ctrl_cfg, workers)
    s_star = model.calibrate(desired_img)
    L = model.interaction(desired_img, Z)
    if L.is_zero():
        raise DegenerateViewError("interaction matrix of the desired view is zero")
    L_pinv = pseudo_inverse(L)

    trace = ServoTrace(desired_pose=desired, desired_image=desired_img)
    pose = initial
    img = observe(pose)   # EmptyRenderError propagates to the caller
    trace.initial_image = img
    e0 = None

    for it in range(ctrl_cfg.max_iters + 1):
        e = model.values(img) - s_star
        err = float(np.linalg.norm(e))
        if e0 is None:
            e0 = err

        status = None
        if err <= ctrl_cfg.convergence_ratio * e0:
            status = ServoStatus.CONVERGED
        elif err > ctrl_cfg.divergence_factor * e0:
            status = ServoStatus.DIVERGED
        elif it == ctrl_cfg.max_iters:
            status = ServoStatus.MAX_ITERS
        if status is not None:
            trace.records.append(ServoRecord(it, pose, Twist.zero(), err))
            trace.status = status
            break

        if ctrl_cfg.interaction_source == "current" and it > 0:
            L_now = model.interaction(img, plane_depth(scene, pose))
            if not L_now.is_zero():
                L_pinv = pseudo_inverse(L_now)

        twist = control_step(L_pinv, e, ctrl_cfg.gain, ctrl_cfg.dof_mask)
        trace.records.append(ServoRecord(it, pose, twist, err))
        if it % ctrl_cfg.log_every == 0:
            console.print(f"🔁 iter {it:4d}  |e| = {err:.4e}  |e|/|e0| = {err / e0:.3e}")

        pose = integrate_twist(pose, twist, ctrl_cfg.dt)
        try:
            img = observe(pose)
        except (EmptyRenderError, ValueError) as exc:
            console.print(f"⚠️ Camera lost the scene at iteration {it + 1}: {exc}")
            trace.records.append(ServoRecord(it + 1, pose, Twist.zero(), float("inf")))
            trace.status = ServoStatus.DIVERGED
            break

    trace.final_image = img
    icon = "✅" if trace.status is ServoStatus.CONVERGED else "⚠️"
    console.print(f"{icon} servo {trace.status.value} after {trace.iterations} iterations "
                  f"(|e| = {trace.records[-1].err_norm:.4e})")
    return trace
