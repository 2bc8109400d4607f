"""Resolve settings from the process environment or the repository's .env file."""

import os
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values

from utils.errors import ConfigError

DATA_ROOT_KEY = "HIERSEG_DATA_ROOT"


@lru_cache(maxsize=1)
def _env_values() -> Dict[str, str]:
    """Parse .env once and cache its key/value pairs."""
    env_path = Path(__file__).resolve().parent.parent / ".env"
    if env_path.exists():
        raw = dotenv_values(env_path)
        return {k: v or "" for k, v in raw.items() if k is not None}
    return {}


def get_env_value(key: str, default: str = "", *, required: bool = False) -> str:
    """Fetch a setting, preferring the live environment over .env."""
    value = os.environ.get(key) or _env_values().get(key, default)
    if required and not value:
        raise ConfigError(f"{key} is not set in the environment or the .env file")
    return value


def resolve_data_root(explicit: Optional[str] = None) -> Path:
    """Return the dataset root from an explicit path or ``HIERSEG_DATA_ROOT``."""
    if explicit:
        return Path(explicit)
    return Path(get_env_value(DATA_ROOT_KEY, required=True))
