from __future__ import annotations

import logging
import os
from pathlib import Path

logger = logging.getLogger(__name__)

THREADS_ENV = "XFCSI_THREADS"


def app_root() -> Path:
    """
    The application directory (parent of core/); main.py lives there.
    """
    return Path(__file__).resolve().parents[1]


def repo_root() -> Path:
    return app_root().parent


def configs_dir() -> Path:
    return repo_root() / "configs"


def default_config_path() -> Path:
    return configs_dir() / "desk.json"


def thread_cap() -> int:
    """
    Worker cap from XFCSI_THREADS (default 1). Garbage values fall back to 1
    with a warning instead of failing the run.
    """
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        logger.warning("ignoring %s=%r (not an integer)", THREADS_ENV, raw)
        return 1
    return max(1, n)
