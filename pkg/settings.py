# settings.py — environment, worker pool sizing and the shared console
import os

from dotenv import load_dotenv
from rich.console import Console

# ✅ Load environment variables (.env next to the working directory, if any)
load_dotenv()

THREADS_ENV = "SMM_SERVO_THREADS"

console = Console(stderr=True, markup=False, highlight=False)


def quiet(enabled: bool = True) -> None:
    """Silence (or restore) progress output on standard error."""
    console.quiet = enabled


def worker_count() -> int:
    """Worker cap from SMM_SERVO_THREADS; 0 or unset means auto."""
    raw = os.getenv(THREADS_ENV, "0").strip() or "0"
    try:
        requested = int(raw)
    except ValueError:
        console.print(f"⚠️ Ignoring non-integer {THREADS_ENV}={raw!r}")
        requested = 0

    if requested < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {requested}")
    if requested == 0:
        return min(4, os.cpu_count() or 2)
    return requested
