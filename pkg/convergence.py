# --------------------------------------------------------
# 📊 convergence.py — scoring finished servo runs
# --------------------------------------------------------
from typing import Dict, Sequence

import numpy as np

from geometry import CameraPose, pose_error

DECAY_WARMUP = 0.10        # leading share of the run ignored by the decay check
DECAY_VIOLATION_LIMIT = 0.05


# -------------------------------------------
# 🧮 Final pose error
# -------------------------------------------
def final_pose_error(final: CameraPose, desired: CameraPose) -> np.ndarray:
    """(tx, ty, tz, alpha, beta, gamma) of the final pose relative to the goal, meters and degrees."""
    return pose_error(final, desired)


def within_tolerance(err: Sequence[float], translation_m: float, rotation_deg: float,
                     axes: Sequence[int] = range(6)) -> bool:
    """Per-axis magnitude check; axes 0..2 are translation, 3..5 rotation."""
    err = np.asarray(err, dtype=float)
    for axis in axes:
        limit = translation_m if axis < 3 else rotation_deg
        if not abs(err[axis]) <= limit:
            return False
    return True


# -------------------------------------------
# 📉 Exponential decay
# -------------------------------------------
def decay_violation_fraction(err_norms: Sequence[float], warmup: float = DECAY_WARMUP) -> float:
    """Share of steps (after the warm-up) where log|e| fails to decrease."""
    norms = np.asarray(err_norms, dtype=float)
    norms = norms[np.isfinite(norms) & (norms > 0)]
    start = int(np.ceil(warmup * len(norms)))
    steps = np.diff(np.log(norms[start:]))
    if steps.size == 0:
        return 0.0
    return float(np.mean(steps >= 0))


def decays_exponentially(err_norms: Sequence[float], limit: float = DECAY_VIOLATION_LIMIT) -> bool:
    return decay_violation_fraction(err_norms) <= limit


# -------------------------------------------
# 〰️ Velocity smoothness
# -------------------------------------------
def velocity_smoothness(twists: np.ndarray) -> float:
    """Mean absolute second difference over all twist components; lower is smoother."""
    twists = np.asarray(twists, dtype=float).reshape(-1, 6)
    if len(twists) < 3:
        return 0.0
    return float(np.mean(np.abs(np.diff(twists, n=2, axis=0))))


def summarize(err: np.ndarray, err_norms: Sequence[float]) -> Dict[str, float]:
    """Flat record for reports."""
    return {
        "err_tx": float(err[0]), "err_ty": float(err[1]), "err_tz": float(err[2]),
        "err_alpha_deg": float(err[3]), "err_beta_deg": float(err[4]), "err_gamma_deg": float(err[5]),
        "final_err_norm": float(err_norms[-1]) if len(err_norms) else float("nan"),
        "decay_violations": decay_violation_fraction(err_norms),
    }
