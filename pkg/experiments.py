# --------------------------------------------------------
# 🧪 experiments.py — scripted positioning and robustness studies
# --------------------------------------------------------
"""
Every study runs a list of cases inside one shared ``Workspace``: a
textured plane 0.5 m in front of the desired camera (which sits at the
world origin looking down +z), wide enough that the offsets used below
keep the plane filling the view.

Table offsets are given the way positioning tables are usually printed:
(tx, ty, tz) in meters, (alpha, beta, gamma) in degrees.  Depth columns
printed as camera depth (around -0.5 m) are converted to offsets from
the working depth.
"""
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from convergence import final_pose_error, summarize, velocity_smoothness
from geometry import CameraPose, Intrinsics, pose_from_euler_deg
from image_utils import load_texture, save_grid_csv, save_minmax_image
from scene import (DEFAULT_WORKING_DEPTH, EmptyRenderError, OcclusionPatch, PlanarScene,
                   render_view)
from servo import (FULL_MASK, PLANAR_MASK, ControllerConfig, DegenerateViewError, FeatureModel,
                   ServoStatus, ServoTrace, cost_value, run_servo)
from settings import console, worker_count
from smm import SmmConfig, smm_of_image
from textures import DEFAULT_SIZE
from trace_store import status_label, write_case_artifacts, write_report

MIN_RESOLUTION = 16
WORKSPACE_SPAN = 4.2          # m, texture side
WORKSPACE_RESOLUTION = 50
DEFAULT_OCCLUSION = 0.15
WORKSPACE_PIXEL_VARIANCE = 4.0   # px² per unit sigma in workspace runs
WORKSPACE_GAIN = 0.5
FAILED_STATUSES = {ServoStatus.DIVERGED.value, "empty_view", "error"}

REPORT_COLUMNS = [
    "case", "status", "iterations", "resolution", "texture",
    "err_tx", "err_ty", "err_tz", "err_alpha_deg", "err_beta_deg", "err_gamma_deg",
    "final_err_norm", "decay_violations", "smoothness", "smm_seconds", "trace", "note",
]


# --------------------------------------------------------
# 🗺️ Workspace and cases
# --------------------------------------------------------
@dataclass(frozen=True)
class Workspace:
    texture: str = "blobs"
    texture_size: int = DEFAULT_SIZE
    texture_span: float = WORKSPACE_SPAN
    working_depth: float = DEFAULT_WORKING_DEPTH
    resolution: int = WORKSPACE_RESOLUTION
    smm: SmmConfig = field(default_factory=lambda: SmmConfig(pixel_variance=WORKSPACE_PIXEL_VARIANCE))
    controller: ControllerConfig = field(default_factory=lambda: ControllerConfig(gain=WORKSPACE_GAIN))

    def scene(self, texture: Optional[str] = None) -> PlanarScene:
        tex = load_texture(texture or self.texture, self.texture_size)
        plane = CameraPose(np.eye(3), np.array([0.0, 0.0, self.working_depth]))
        return PlanarScene(tex, plane_pose=plane,
                           plane_scale=self.texture_span / max(tex.width, tex.height))

    def intrinsics(self, resolution: Optional[int] = None) -> Intrinsics:
        """Square view; focal = side / 4 keeps the field of view fixed across resolutions."""
        side = resolution or self.resolution
        return Intrinsics.centered(side, side, side / 4.0)

    @property
    def desired_pose(self) -> CameraPose:
        return CameraPose.identity()


@dataclass(frozen=True)
class ExperimentCase:
    name: str
    offset: Tuple[float, float, float, float, float, float]   # tx, ty, tz (m), alpha, beta, gamma (deg)
    dof_mask: Tuple[bool, ...] = FULL_MASK
    texture: Optional[str] = None
    resolution: Optional[int] = None
    occlusion: Optional[float] = None                          # occluded share of the view
    luminance: Optional[Tuple[float, float]] = None            # (gain, offset) on current images
    controller: Dict[str, object] = field(default_factory=dict)
    smm: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.offset) != 6 or not all(math.isfinite(v) for v in self.offset):
            raise ValueError(f"{self.name}: pose offset must be 6 finite numbers")
        if self.resolution is not None and self.resolution < MIN_RESOLUTION:
            raise ValueError(f"{self.name}: resolution must be at least {MIN_RESOLUTION}x{MIN_RESOLUTION}")

    def initial_pose(self, desired: CameraPose) -> CameraPose:
        return desired.compose(pose_from_euler_deg(*self.offset))


@dataclass
class ExperimentReport:
    title: str
    entries: List[dict] = field(default_factory=list)
    report_path: Optional[str] = None
    traces: Dict[str, ServoTrace] = field(default_factory=dict)

    def entry(self, name: str) -> dict:
        for e in self.entries:
            if e["case"] == name:
                return e
        raise KeyError(name)

    def statuses(self) -> Dict[str, str]:
        return {e["case"]: e["status"] for e in self.entries}

    def count(self, status: str) -> int:
        return sum(1 for e in self.entries if e["status"] == status)

    @property
    def failed(self) -> bool:
        return any(e["status"] in FAILED_STATUSES for e in self.entries)

    def unconverged(self) -> List[str]:
        return [e["case"] for e in self.entries if e["status"] != ServoStatus.CONVERGED.value]


def _table2_case(n: int, px, py, pz, ax, ay, az) -> ExperimentCase:
    return ExperimentCase(f"exp{n:02d}", (px, py, round(pz + DEFAULT_WORKING_DEPTH, 6), ax, ay, az))


TABLE1_CASES = [
    ExperimentCase("exp01", (0.30, 0.30, 0.0, 0.0, 0.0, 0.0), PLANAR_MASK),
    ExperimentCase("exp02", (0.25, 0.25, 0.0, 0.0, 0.0, -15.0), PLANAR_MASK),
    ExperimentCase("exp03", (0.25, 0.25, 0.0, 0.0, 0.0, 10.0), PLANAR_MASK),
    ExperimentCase("exp04", (-0.30, 0.25, 0.0, 0.0, 0.0, -18.0), PLANAR_MASK),
    ExperimentCase("exp05", (0.40, 0.35, 0.0, 0.0, 0.0, 5.0), PLANAR_MASK),
]

TABLE2_CASES = [
    _table2_case(1, -0.40, -0.40, -0.50, 0.5, 1.0, -10.0),
    _table2_case(2, -0.40, -0.40, -0.53, 1.0, 0.3, -20.0),
    _table2_case(3, 0.36, 0.38, -0.48, 0.0, 0.3, -12.0),
    _table2_case(4, 0.35, 0.37, -0.55, 0.0, 0.0, 8.0),
    _table2_case(5, 0.22, -0.32, -0.51, 0.1, 1.2, 20.0),
    _table2_case(6, 0.37, 0.42, -0.46, 0.8, 0.5, 8.0),
    _table2_case(7, 0.30, -0.45, -0.48, 1.0, 0.5, -20.0),
    _table2_case(8, -0.37, 0.28, -0.52, -0.6, -0.1, -20.0),
    _table2_case(9, 0.35, 0.38, -0.53, 0.4, 0.3, -20.0),
    _table2_case(10, 0.27, -0.35, -0.49, 0.4, 1.0, 14.0),
]

RESOLUTION_CASE = TABLE2_CASES[3]
OCCLUSION_CASE = TABLE2_CASES[4]
LUMINANCE_CASE = TABLE2_CASES[3]
# inside the basin of every textured content case
CONTENT_CASE = ExperimentCase("content", (0.10, -0.08, 0.02, 0.5, -0.5, 5.0))


def table_case(cases: Sequence[ExperimentCase], name: str) -> ExperimentCase:
    for case in cases:
        if case.name == name:
            return case
    raise KeyError(name)


# --------------------------------------------------------
# ▶️ Running cases
# --------------------------------------------------------
def _configs(case: ExperimentCase, workspace: Workspace) -> Tuple[SmmConfig, ControllerConfig]:
    smm_cfg = SmmConfig.model_validate({**workspace.smm.model_dump(), **case.smm})
    ctrl_cfg = ControllerConfig.model_validate(
        {**workspace.controller.model_dump(), "dof_mask": tuple(case.dof_mask), **case.controller})
    return smm_cfg, ctrl_cfg


def _blank_entry(case: ExperimentCase, workspace: Workspace) -> dict:
    entry = {col: None for col in REPORT_COLUMNS}
    entry.update(case=case.name, resolution=case.resolution or workspace.resolution,
                 texture=case.texture or workspace.texture, note="")
    return entry


def run_case(case: ExperimentCase, workspace: Workspace, output_dir: str,
             workers: Optional[int] = 1) -> Tuple[dict, Optional[ServoTrace]]:
    """Run one case and write its artifacts; failures become a status, never an exception."""
    entry = _blank_entry(case, workspace)
    case_dir = os.path.join(output_dir, case.name)
    try:
        smm_cfg, ctrl_cfg = _configs(case, workspace)
        scene = workspace.scene(case.texture)
        K = workspace.intrinsics(case.resolution)
        desired = workspace.desired_pose
        occlusion = OcclusionPatch.covering(K, case.occlusion) if case.occlusion else None

        started = time.perf_counter()
        smm_of_image(render_view(scene, desired, K), K, smm_cfg, workers)
        entry["smm_seconds"] = time.perf_counter() - started

        trace = run_servo(scene, case.initial_pose(desired), desired, K, smm_cfg, ctrl_cfg,
                          occlusion=occlusion, luminance=case.luminance, workers=workers)
    except DegenerateViewError as exc:
        entry.update(status="degenerate", note=str(exc))
        console.print(f"⚠️ {case.name}: degenerate view ({exc})")
        return entry, None
    except EmptyRenderError as exc:
        entry.update(status="empty_view", note=str(exc))
        console.print(f"❌ {case.name}: {exc}")
        return entry, None
    except Exception as exc:
        entry.update(status="error", note=f"{type(exc).__name__}: {exc}")
        console.print(f"❌ {case.name} failed: {exc}")
        return entry, None

    paths = write_case_artifacts(trace, case_dir)
    err = final_pose_error(trace.final_pose, desired)
    entry.update(summarize(err, trace.err_norms()))
    entry.update(status=status_label(trace.status), iterations=trace.iterations,
                 smoothness=velocity_smoothness(trace.twists()), trace=paths["trace"])
    console.print(f"🧪 {case.name}: {entry['status']} in {trace.iterations} iterations, "
                  f"final error t=({err[0]:+.4f}, {err[1]:+.4f}, {err[2]:+.4f}) m "
                  f"r=({err[3]:+.3f}, {err[4]:+.3f}, {err[5]:+.3f}) deg")
    return entry, trace


def run_cases(title: str, cases: Sequence[ExperimentCase], workspace: Optional[Workspace] = None,
              output_dir: str = "results", workers: Optional[int] = None) -> ExperimentReport:
    """Independent cases in parallel, one single-threaded servo loop each; report keeps case order."""
    workspace = workspace or Workspace()
    os.makedirs(output_dir, exist_ok=True)
    console.print(f"📘 {title}: {len(cases)} cases -> {output_dir}")

    entries: List[Optional[dict]] = [None] * len(cases)
    traces: List[Optional[ServoTrace]] = [None] * len(cases)
    pool = max(1, min(len(cases), worker_count() if workers is None else workers))
    with ThreadPoolExecutor(max_workers=pool) as executor:
        futures = {executor.submit(run_case, case, workspace, output_dir, 1): idx
                   for idx, case in enumerate(cases)}
        for fut in as_completed(futures):
            idx = futures[fut]
            entries[idx], traces[idx] = fut.result()

    report = ExperimentReport(title=title, entries=entries)
    report.traces = {c.name: t for c, t in zip(cases, traces) if t is not None}
    report.report_path = write_report(entries, os.path.join(output_dir, "report.csv"), REPORT_COLUMNS)
    missed = report.unconverged()
    if missed:
        listed = ", ".join(f"{name}={report.entry(name)['status']}" for name in missed)
        console.print(f"⚠️ {title}: {len(missed)} of {len(cases)} cases did not converge ({listed})")
    else:
        console.print(f"✅ {title}: all {len(cases)} cases converged")
    return report


# --------------------------------------------------------
# 📋 Studies
# --------------------------------------------------------
def run_table1(workspace: Optional[Workspace] = None, output_dir: str = "results/table1",
               workers: Optional[int] = None) -> ExperimentReport:
    """Planar task: vx, vy and wz only, depth fixed."""
    return run_cases("Planar positioning", TABLE1_CASES, workspace, output_dir, workers)


def run_table2(workspace: Optional[Workspace] = None, output_dir: str = "results/table2",
               workers: Optional[int] = None) -> ExperimentReport:
    """Full 6-DOF positioning from ten start poses."""
    return run_cases("6-DOF positioning", TABLE2_CASES, workspace, output_dir, workers)


def run_resolution_study(workspace: Optional[Workspace] = None, output_dir: str = "results/resolution",
                         resolutions: Sequence[int] = (50, 100),
                         workers: Optional[int] = None) -> ExperimentReport:
    cases = [ExperimentCase(f"res{r}", RESOLUTION_CASE.offset, resolution=r) for r in resolutions]
    return run_cases("Resolution study", cases, workspace, output_dir, workers)


def run_occlusion_study(workspace: Optional[Workspace] = None, output_dir: str = "results/occlusion",
                        fraction: float = DEFAULT_OCCLUSION,
                        workers: Optional[int] = None) -> ExperimentReport:
    """Occluded current views against a clean desired view, plus the unoccluded control run."""
    cases = [
        ExperimentCase("occluded", OCCLUSION_CASE.offset, occlusion=fraction),
        ExperimentCase("clean", OCCLUSION_CASE.offset),
    ]
    return run_cases("Occlusion study", cases, workspace, output_dir, workers)


def run_content_study(textures: Sequence[str] = ("fine", "blobs", "low", "constant"),
                      workspace: Optional[Workspace] = None, output_dir: str = "results/content",
                      workers: Optional[int] = None) -> ExperimentReport:
    if len(textures) < 2:
        raise ValueError("content study needs at least two textures")
    cases = [ExperimentCase(_case_name(t), CONTENT_CASE.offset, texture=t) for t in textures]
    return run_cases("Content study", cases, workspace, output_dir, workers)


def run_luminance_study(workspace: Optional[Workspace] = None, output_dir: str = "results/luminance",
                        perturbations: Sequence[Tuple[float, float]] = ((1.15, 0.0), (1.0, 20.0)),
                        workers: Optional[int] = None) -> ExperimentReport:
    """Current views under a global gain/offset change; the desired view stays untouched."""
    cases = [ExperimentCase(f"gain{g:g}_offset{o:g}", LUMINANCE_CASE.offset, luminance=(g, o))
             for g, o in perturbations]
    return run_cases("Luminance study", cases, workspace, output_dir, workers)


def _case_name(texture: str) -> str:
    stem = os.path.splitext(os.path.basename(texture))[0]
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in stem) or "texture"


# --------------------------------------------------------
# 🏔️ Cost landscape
# --------------------------------------------------------
def lattice(extent: float, steps: int) -> np.ndarray:
    """Symmetric offsets with an exact zero in the middle; steps must be odd."""
    if steps < 3 or steps % 2 == 0:
        raise ValueError(f"lattice needs an odd number of steps >= 3, got {steps}")
    half = steps // 2
    return extent * (np.arange(-half, half + 1) / half)


def sample_cost_landscape(scene: PlanarScene, desired: CameraPose, K: Intrinsics,
                          offsets_x: Sequence[float], offsets_y: Sequence[float],
                          smm_cfg: Optional[SmmConfig] = None,
                          workers: Optional[int] = None) -> np.ndarray:
    """E(tx, ty) for in-plane translations of the desired pose; rows follow ty, columns tx."""
    smm_cfg = smm_cfg or SmmConfig()
    model = FeatureModel(K, smm_cfg, ControllerConfig(), workers=1)
    s_star = model.calibrate(render_view(scene, desired, K))
    xs, ys = np.asarray(offsets_x, dtype=float), np.asarray(offsets_y, dtype=float)

    def cost_at(index: Tuple[int, int]) -> Tuple[Tuple[int, int], float]:
        row, col = index
        pose = desired.compose(CameraPose(np.eye(3), np.array([xs[col], ys[row], 0.0])))
        return index, cost_value(model.values(render_view(scene, pose, K)) - s_star)

    values = np.empty((len(ys), len(xs)))
    indices = [(r, c) for r in range(len(ys)) for c in range(len(xs))]
    pool = max(1, worker_count() if workers is None else workers)
    with ThreadPoolExecutor(max_workers=pool) as executor:
        for (row, col), cost in executor.map(cost_at, indices):
            values[row, col] = cost
    return values


@dataclass
class LandscapeResult:
    offsets: np.ndarray
    values: np.ndarray
    csv_path: Optional[str] = None

    @property
    def minimum_index(self) -> Tuple[int, int]:
        return tuple(int(i) for i in np.unravel_index(np.argmin(self.values), self.values.shape))


def run_landscape_study(workspace: Optional[Workspace] = None, output_dir: str = "results/landscape",
                        extent: float = 0.2, steps: int = 21, texture: Optional[str] = None,
                        workers: Optional[int] = None) -> LandscapeResult:
    workspace = workspace or Workspace()
    offsets = lattice(extent, steps)
    console.print(f"📘 Cost landscape: {steps}x{steps} lattice, +/-{extent} m")
    values = sample_cost_landscape(workspace.scene(texture), workspace.desired_pose,
                                   workspace.intrinsics(), offsets, offsets, workspace.smm, workers)
    csv_path = save_grid_csv(values, os.path.join(output_dir, "landscape.csv"))
    save_minmax_image(values, os.path.join(output_dir, "landscape.pgm"))
    console.print(f"✅ Landscape written: {csv_path}")
    return LandscapeResult(offsets=offsets, values=values, csv_path=csv_path)
