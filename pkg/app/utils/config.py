import os
from dotenv import load_dotenv

# Load environment variables from .env
load_dotenv()


def _env_flag(name: str, default: str = "False") -> bool:
    return os.getenv(name, default).lower() in ("true", "1", "yes")


class Config:
    """Process-level configuration loaded from environment variables."""

    # Logging Configuration
    LOG_DIRECTORY = os.getenv("LOG_DIRECTORY", "logs/")
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
    LOG_TO_FILE = _env_flag("LOG_TO_FILE")

    # Timezone used for log timestamps
    TIMEZONE = os.getenv("TIMEZONE", "UTC")

    # Worker threads for ablation runs (1 keeps everything single-threaded and reproducible)
    THREADS = max(1, int(os.getenv("HURRICANE_SVI_THREADS", 1) or 1))

    # Test Configuration
    RUN_SLOW_TESTS = _env_flag("RUN_SLOW_TESTS")
