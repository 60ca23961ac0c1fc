"""Default settings, optionally overridden by a top-level config.py and env."""

import os
import sys
from pathlib import Path

ROOT_DIR = Path(__file__).parent.parent
DATA_DIR = ROOT_DIR / "data"
CASES_DIR = DATA_DIR / "cases"
TEMPLATES_DIR = ROOT_DIR / "templates"

DEFAULT_WORKERS = os.cpu_count() or 1
DEFAULT_SEED = 0
CHECKPOINT_EVERY = 1000
OUTPUT_DIR = ROOT_DIR / "output"

BLACKOUT_THRESHOLD = 0.05
MEAN_OUTAGE_RATE_HOURS = 0.9158
HOURS_PER_YEAR = 8760.0

# Add parent directory to path for config import
sys.path.insert(0, str(ROOT_DIR))

try:
    import config as _user_config
except ImportError:
    _user_config = None

if _user_config is not None:
    DEFAULT_WORKERS = getattr(_user_config, "DEFAULT_WORKERS", DEFAULT_WORKERS)
    DEFAULT_SEED = getattr(_user_config, "DEFAULT_SEED", DEFAULT_SEED)
    CHECKPOINT_EVERY = getattr(_user_config, "CHECKPOINT_EVERY", CHECKPOINT_EVERY)
    OUTPUT_DIR = Path(getattr(_user_config, "OUTPUT_DIR", OUTPUT_DIR))


def default_workers() -> int:
    """Worker count: BLACKOUT_WORKERS env var, then config.py, then CPU count."""
    value = os.environ.get("BLACKOUT_WORKERS")
    if value:
        try:
            workers = int(value)
        except ValueError:
            raise ValueError(f"BLACKOUT_WORKERS must be an integer, got {value!r}")
        if workers < 1:
            raise ValueError(f"BLACKOUT_WORKERS must be >= 1, got {workers}")
        return workers
    return max(1, int(DEFAULT_WORKERS))
