"""
Atomic File Module

Writes output files through a temporary sibling followed by a rename, so a
reader never observes a half-written checkpoint, stack dump or table.
"""

import logging
import os
import uuid
from pathlib import Path
from typing import Callable, Union

import pandas as pd

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class AtomicFile:
    """Handles atomic replacement of local files."""

    def set_logger(self, custom_logger):
        """Set a custom logger for the atomic handler."""
        global logger
        logger = custom_logger

    def atomic_update(self, path: PathLike, write_func: Callable, *args, **kwargs) -> Path:
        """
        Write a file atomically.

        Args:
            path: Final file path
            write_func: Called as write_func(tmp_path, *args, **kwargs)
            *args, **kwargs: Passed through to write_func

        Returns:
            The final path
        """
        path = Path(path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        tmp_path = path.with_name(f"{path.name}.tmp.{uuid.uuid4().hex}")

        try:
            write_func(tmp_path, *args, **kwargs)
            os.replace(tmp_path, path)
        except Exception as e:
            logger.error(f"❌ Atomic write to {path} failed: {e}")
            try:
                if tmp_path.exists():
                    tmp_path.unlink()
            except OSError as cleanup_error:
                logger.warning(f"⚠️ Failed to clean up temporary file: {cleanup_error}")
            raise

        logger.debug(f"✅ Wrote {path}")
        return path

    def atomic_bytes_update(self, path: PathLike, payload: bytes) -> Path:
        return self.atomic_update(path, lambda tmp: Path(tmp).write_bytes(payload))

    def atomic_csv_update(self, path: PathLike, df: pd.DataFrame, **to_csv_kwargs) -> Path:
        """Atomically write a DataFrame as CSV (no index)."""
        to_csv_kwargs.setdefault('index', False)
        return self.atomic_update(path, lambda tmp: df.to_csv(tmp, **to_csv_kwargs))


def write_csv(path: PathLike, df: pd.DataFrame, **to_csv_kwargs) -> Path:
    return AtomicFile().atomic_csv_update(path, df, **to_csv_kwargs)
