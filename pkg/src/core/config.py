"""
Configuration Module

This module handles loading configuration from environment variables,
the optional .env file and flat `key = value` configuration files.
It provides a centralized place for all runtime settings.
"""

import os
import json
import logging
from pathlib import Path
from typing import Dict, Any, Optional
from dotenv import load_dotenv, dotenv_values

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)


def normalize_key(key: str) -> str:
    """Map `batch-size`, `BATCH_SIZE` and `batch_size` onto one spelling."""
    return key.strip().lower().replace('-', '_')


def load_config_file(path: Optional[str]) -> Dict[str, str]:
    """
    Read a flat `key = value` configuration file.

    Args:
        path: Path to the file, or None

    Returns:
        Dictionary with normalized keys and raw string values
    """
    if not path:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    values = dotenv_values(config_path)
    parsed = {normalize_key(k): v for k, v in values.items() if v is not None}
    logger.debug(f"Loaded {len(parsed)} settings from {config_path}")
    return parsed


def _env_flag(name: str, default: str = 'False') -> bool:
    return os.getenv(name, default).lower() == 'true'


class Config:
    """Manages application configuration."""

    def __init__(self, env_file: Optional[str] = None):
        """
        Initialize the configuration manager.

        Args:
            env_file: Path to .env file (default: project_root/.env)
        """
        self.project_root = Path(__file__).parent.parent.parent
        self.default_env_path = self.project_root / ".env"

        if env_file:
            self.env_path = Path(env_file)
        else:
            self.env_path = self.default_env_path

        self._load_env_file()
        self._init_config()

    def set_logger(self, custom_logger):
        """Set a custom logger for the configuration manager."""
        global logger
        logger = custom_logger

    def _load_env_file(self):
        """Load environment variables from .env file."""
        if self.env_path.exists():
            load_dotenv(self.env_path)
            logger.debug(f"Loaded environment variables from {self.env_path}")
        else:
            logger.debug(f"No environment file at {self.env_path}")

    def _init_config(self):
        """Initialize configuration from environment variables."""
        self.debug_mode = _env_flag('DEBUG_MODE')

        # Logging configuration
        self.log_dir = os.getenv('LOG_DIR')
        self.log_level = os.getenv('LOG_LEVEL', 'INFO')

        # Runtime configuration
        self.threads = int(os.getenv('UQCLOUD_THREADS', '1'))
        self.mc_samples = int(os.getenv('UQCLOUD_K', '50'))
        self.seed = int(os.getenv('UQCLOUD_SEED', '0'))

        self._validate_config()

    def _validate_config(self):
        """Validate configuration values."""
        if self.threads < 1:
            logger.warning(f"⚠️ UQCLOUD_THREADS={self.threads} is not positive, using 1")
            self.threads = 1
        if self.mc_samples < 1:
            logger.warning(f"⚠️ UQCLOUD_K={self.mc_samples} is not positive, using 50")
            self.mc_samples = 50

    def resolve(self, key: str, flag_value: Any, file_values: Dict[str, str], default: Any, cast=str) -> Any:
        """
        Resolve one setting: flag > config file > environment > default.

        Args:
            key: Setting name (flag spelling or snake case)
            flag_value: Value given on the command line, or None
            file_values: Values parsed by load_config_file
            default: Built-in default
            cast: Conversion applied to string values

        Returns:
            The resolved value
        """
        if flag_value is not None:
            return flag_value
        name = normalize_key(key)
        if name in file_values:
            return cast(file_values[name])
        env_value = os.getenv(f"UQCLOUD_{name.upper()}")
        if env_value is not None:
            return cast(env_value)
        return default

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert configuration to a dictionary.

        Returns:
            Dictionary representation of the configuration
        """
        return {
            'debug_mode': self.debug_mode,
            'log_dir': self.log_dir,
            'log_level': self.log_level,
            'threads': self.threads,
            'mc_samples': self.mc_samples,
            'seed': self.seed,
        }

    def __str__(self) -> str:
        """Get a string representation of the configuration."""
        return json.dumps(self.to_dict(), indent=2)
