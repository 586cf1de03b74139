import time
from datetime import datetime
from zoneinfo import ZoneInfo

from app.utils.config import Config


def get_current_datetime() -> str:
    """
    Get the current wall-clock time in the configured timezone.

    Returns:
        str: ISO 8601 timestamp, used for log records only (never written to run artifacts).
    """
    return datetime.now(ZoneInfo(Config.TIMEZONE)).isoformat()


def current_log_date() -> str:
    """Return today's date as DD-MM-YYYY, the log file naming scheme."""
    return datetime.now(ZoneInfo(Config.TIMEZONE)).strftime("%d-%m-%Y")


class Stopwatch:
    """Monotonic wall-time measurement for fits, epochs and ablation rows."""

    def __init__(self) -> None:
        self._start = time.perf_counter()

    def elapsed(self) -> float:
        """Seconds since the stopwatch was created."""
        return time.perf_counter() - self._start
