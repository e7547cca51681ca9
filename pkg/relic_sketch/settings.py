"""
Relic Sketch - Environment Settings
Values come from the process environment, optionally seeded from a .env file
"""

import os

from dotenv import load_dotenv

load_dotenv()

ARTIFACT_VERSION = "1"


def thread_limit() -> int:
    """Maximum number of worker threads for per-image fan-out"""
    raw = os.getenv("RELIC_SKETCH_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def log_level() -> str:
    return os.getenv("RELIC_SKETCH_LOG_LEVEL", "INFO").upper()


def log_file() -> str:
    return os.getenv("RELIC_SKETCH_LOG_FILE", "relic_sketch.log")
