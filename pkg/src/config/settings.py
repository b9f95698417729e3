#!/usr/bin/env python3
"""
Environment Settings
====================

Process-level defaults read from environment variables. A `.env` file in
the working directory is loaded first, so local overrides never need to be
exported by hand.

Variables:
    OFFLOAD_EXACT_CAP    - feasible-profile cap for the exact auction (default 1000000)
    OFFLOAD_WORKERS      - processes used for replications and sweeps (default 1)
    OFFLOAD_LOG_LEVEL    - logging level name (default INFO)
    OFFLOAD_OUTPUT_DIR   - default output directory (default results)
    OFFLOAD_P_CAP        - price cap (default 50)
    OFFLOAD_DELTA_P_MIN  - floor on the price sensitivity (default 1e-6)
"""

import os
import logging
from dataclasses import dataclass
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    """Environment-backed defaults"""
    exact_cap: int = 10 ** 6
    workers: int = 1
    log_level: str = "INFO"
    output_dir: str = "results"
    p_cap: float = 50.0
    delta_p_min: float = 1e-6

    @classmethod
    def from_env(cls) -> "Settings":
        """Read settings, falling back to defaults on unparsable values"""
        defaults = cls()
        return cls(
            exact_cap=_read("OFFLOAD_EXACT_CAP", int, defaults.exact_cap),
            workers=max(1, _read("OFFLOAD_WORKERS", int, defaults.workers)),
            log_level=os.environ.get("OFFLOAD_LOG_LEVEL", defaults.log_level).upper(),
            output_dir=os.environ.get("OFFLOAD_OUTPUT_DIR", defaults.output_dir),
            p_cap=_read("OFFLOAD_P_CAP", float, defaults.p_cap),
            delta_p_min=_read("OFFLOAD_DELTA_P_MIN", float, defaults.delta_p_min),
        )


def _read(name: str, cast, default):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        logger.warning(f"Ignoring {name}={raw!r}: not a valid {cast.__name__}")
        return default


def get_settings() -> Settings:
    return Settings.from_env()
