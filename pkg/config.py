# --------------------------------------------------------
# ⚙️ config.py — flat key=value run configuration
# --------------------------------------------------------
"""
Run files are plain ``key=value`` lines (``#`` starts a comment) read
with python-dotenv.  A dotted prefix selects the section, e.g.
``smm.sigma_min=1.5`` or ``controller.gain=0.8``.  See docs/config.md.
"""
import os
from typing import Dict, Optional

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from geometry import CameraPose, Intrinsics, pose_from_euler_deg
from image_utils import load_texture
from scene import DEFAULT_WORKING_DEPTH, OcclusionPatch, PlanarScene
from servo import DOF_NAMES, ControllerConfig, dof_mask_from_names
from smm import SmmConfig
from textures import DEFAULT_SIZE, TEXTURES

SECTIONS = ("scene", "camera", "initial", "desired", "smm", "controller", "perturb", "landscape")
TOP_LEVEL = ("texture", "output_dir")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Config file problems; the message lists every offending key."""


# --------------------------------------------------------
# 🧱 Sections
# --------------------------------------------------------
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SceneConfig(_Section):
    plane_scale: Optional[float] = Field(None, gt=0)    # m per texture pixel, default spans 0.4 m
    background: float = Field(0.0, ge=0, le=255)
    working_depth: float = Field(DEFAULT_WORKING_DEPTH, gt=0)
    texture_size: int = Field(DEFAULT_SIZE, ge=16)      # side of procedural textures


class CameraConfig(_Section):
    width: int = Field(50, ge=1)
    height: int = Field(50, ge=1)
    focal: float = Field(62.5, gt=0)
    center_u: Optional[float] = None
    center_v: Optional[float] = None

    def intrinsics(self) -> Intrinsics:
        cu = (self.width - 1) / 2.0 if self.center_u is None else self.center_u
        cv = (self.height - 1) / 2.0 if self.center_v is None else self.center_v
        return Intrinsics(self.focal, self.focal, cu, cv, self.width, self.height)


class PoseConfig(_Section):
    """World pose, meters and degrees, R = Rx(alpha) Ry(beta) Rz(gamma)."""

    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def pose(self) -> CameraPose:
        return pose_from_euler_deg(self.tx, self.ty, self.tz, self.alpha, self.beta, self.gamma)


class PerturbConfig(_Section):
    occlusion: Optional[float] = Field(None, gt=0, le=1)   # occluded share of current views
    luminance_gain: float = Field(1.0, gt=0)
    luminance_offset: float = 0.0


class LandscapeConfig(_Section):
    extent: float = Field(0.2, gt=0)
    steps: int = Field(21, ge=3)

    @field_validator("steps")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("steps must be odd so the lattice contains zero displacement")
        return v


class RunConfig(_Section):
    texture: str
    output_dir: str = "results/run"
    scene: SceneConfig = Field(default_factory=SceneConfig)
    camera: CameraConfig = Field(default_factory=CameraConfig)
    initial: PoseConfig = Field(default_factory=PoseConfig)
    desired: PoseConfig = Field(default_factory=PoseConfig)
    smm: SmmConfig = Field(default_factory=SmmConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    perturb: PerturbConfig = Field(default_factory=PerturbConfig)
    landscape: LandscapeConfig = Field(default_factory=LandscapeConfig)

    @field_validator("texture")
    @classmethod
    def _texture_exists(cls, v: str) -> str:
        if v not in TEXTURES and not os.path.isfile(v):
            raise ValueError(f"texture {v!r} is neither a built-in ({', '.join(TEXTURES)}) nor an existing file")
        return v

    # -------------------------------------------
    # 🔧 Builders
    # -------------------------------------------
    def build_scene(self) -> PlanarScene:
        plane = CameraPose(np.eye(3), np.array([0.0, 0.0, self.scene.working_depth]))
        return PlanarScene(load_texture(self.texture, self.scene.texture_size), plane_pose=plane,
                           plane_scale=self.scene.plane_scale, background=self.scene.background)

    def intrinsics(self) -> Intrinsics:
        return self.camera.intrinsics()

    def occlusion_patch(self) -> Optional[OcclusionPatch]:
        if self.perturb.occlusion is None:
            return None
        return OcclusionPatch.covering(self.intrinsics(), self.perturb.occlusion)

    def luminance(self):
        if self.perturb.luminance_gain == 1.0 and self.perturb.luminance_offset == 0.0:
            return None
        return self.perturb.luminance_gain, self.perturb.luminance_offset


# --------------------------------------------------------
# 📄 Parsing
# --------------------------------------------------------
def _parse_dof_mask(raw: str):
    tokens = [t.strip().lower() for t in raw.replace(";", ",").split(",") if t.strip()]
    if tokens and all(t in DOF_NAMES for t in tokens):
        return dof_mask_from_names(tokens)
    flags = []
    for t in tokens:
        if t in _TRUE:
            flags.append(True)
        elif t in _FALSE:
            flags.append(False)
        else:
            raise ValueError(f"dof_mask entry {t!r} is neither a flag nor one of {', '.join(DOF_NAMES)}")
    return tuple(flags)


def _nest(flat: Dict[str, Optional[str]]) -> Dict[str, object]:
    nested: Dict[str, object] = {}
    problems = []
    for key, value in flat.items():
        if value is None:
            problems.append(f"{key}: missing '=value'")
            continue
        section, dot, name = key.partition(".")
        if not dot:
            if key not in TOP_LEVEL:
                problems.append(f"{key}: unknown key")
            nested[key] = value
            continue
        if section not in SECTIONS or not name:
            problems.append(f"{key}: unknown section {section!r}")
            continue
        if section == "controller" and name == "dof_mask":
            try:
                value = _parse_dof_mask(value)
            except ValueError as exc:
                problems.append(f"{key}: {exc}")
                continue
        nested.setdefault(section, {})[name] = value
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    return nested


def _describe(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"]) or "(config)"
        lines.append(f"{key}: {err['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def load_run_config(values: Dict[str, Optional[str]]) -> RunConfig:
    """Validate an already-read flat mapping."""
    try:
        return RunConfig.model_validate(_nest(values))
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def parse_config(path: str) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    return load_run_config(dict(dotenv_values(path)))
