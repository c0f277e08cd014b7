# --------------------------------------------------------
# 🧾 trace_store.py — trace CSVs, per-case artifacts and reports
# --------------------------------------------------------
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from image_utils import save_image
from servo import ServoStatus, ServoTrace
from settings import console

TRACE_COLUMNS = ["iter", "tx", "ty", "tz", "alpha_deg", "beta_deg", "gamma_deg",
                 "vx", "vy", "vz", "wx", "wy", "wz", "err_norm"]
STATUS_PREFIX = "# status="


def trace_frame(trace: ServoTrace) -> pd.DataFrame:
    rows = [(r.iteration, *r.pose.as_row(), *r.twist.as_vector(), r.err_norm) for r in trace.records]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def write_trace(trace: ServoTrace, path: str) -> str:
    """One row per iteration, then a trailing status comment line."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    body = trace_frame(trace).to_csv(index=False, float_format="%.10g", lineterminator="\n")
    status = trace.status.value if trace.status else "unknown"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(body)
        fh.write(f"{STATUS_PREFIX}{status}\n")
    return path


def read_trace(path: str) -> pd.DataFrame:
    """Trace rows with the terminal status in ``df.attrs['status']``."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"trace not found: {path}")
    df = pd.read_csv(path, comment="#")
    status = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith(STATUS_PREFIX):
                status = line[len(STATUS_PREFIX):].strip()
    df.attrs["status"] = status
    return df


def write_case_artifacts(trace: ServoTrace, case_dir: str) -> Dict[str, str]:
    """trace.csv plus initial/final/desired views and |I - I*| at the terminal pose."""
    os.makedirs(case_dir, exist_ok=True)
    paths = {"trace": write_trace(trace, os.path.join(case_dir, "trace.csv"))}
    for name in ("initial", "final", "desired"):
        img = getattr(trace, f"{name}_image")
        if img is not None:
            paths[name] = save_image(img, os.path.join(case_dir, f"{name}.pgm"))
    if trace.final_image is not None and trace.desired_image is not None:
        diff = np.abs(trace.final_image.intensities - trace.desired_image.intensities)
        paths["diff"] = save_image(diff, os.path.join(case_dir, "diff.pgm"))
    return paths


def write_report(entries: List[dict], path: str, columns: Optional[List[str]] = None) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    df = pd.DataFrame(entries, columns=columns)
    df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    console.print(f"📝 Report written: {path} ({len(df)} cases)")
    return path


def status_label(status) -> str:
    return status.value if isinstance(status, ServoStatus) else str(status)
