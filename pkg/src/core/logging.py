"""
Run Logging Module

Logging for uqcloud invocations. Every record goes to stderr, optionally to a
shared log in LOG_DIR, and, for commands that write an artifact, to a run log
next to it (runs/model.ckpt -> runs/model.log). Each line carries the
subcommand that produced it.
"""

import functools
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

DEFAULT_FORMAT = "%(asctime)s [%(levelname)s] [%(command)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class CommandFilter(logging.Filter):
    """Stamp records with the running subcommand."""

    def __init__(self, command: str):
        super().__init__()
        self.command = command

    def filter(self, record: logging.LogRecord) -> bool:
        record.command = self.command
        return True


class LoggerManager:
    """Owns the handlers of one CLI run and shares them with the package loggers."""

    def __init__(
        self,
        name: str = "uqcloud",
        command: str = "-",
        log_dir: Optional[str] = None,
        console_level: int = logging.INFO,
        file_level: int = logging.DEBUG,
        log_format: str = DEFAULT_FORMAT,
    ):
        """
        Args:
            name: Logger name
            command: Subcommand stamped on every record
            log_dir: Directory of the shared `<name>.log` (None: no shared log)
            console_level: Level of the stderr handler
            file_level: Level of every file handler
            log_format: Format string; may use %(command)s
        """
        self.name = name
        self.command = command
        self.file_level = file_level
        self.formatter = logging.Formatter(log_format, DATE_FORMAT)
        self.command_filter = CommandFilter(command)
        self.routed: List[logging.Logger] = []

        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self.logger.handlers.clear()

        # stdout stays free for command results
        self.console_handler = self._add_handler(logging.StreamHandler(sys.stderr), console_level)

        self.file_handler = None
        if log_dir:
            path = Path(log_dir) / f"{name}.log"
            path.parent.mkdir(parents=True, exist_ok=True)
            self.file_handler = self._add_handler(logging.FileHandler(path, mode='a', encoding='utf-8'), file_level)

        self.run_handler = None
        self.run_log: Optional[Path] = None

    def _add_handler(self, handler: logging.Handler, level: int) -> logging.Handler:
        handler.setLevel(level)
        handler.setFormatter(self.formatter)
        handler.addFilter(self.command_filter)
        for target in [self.logger] + self.routed:
            target.addHandler(handler)
        return handler

    def get_logger(self) -> logging.Logger:
        return self.logger

    def route(self, *names: str):
        """
        Send records of other logger hierarchies through this manager's handlers.

        Args:
            names: Parent logger names, e.g. "src" for every package module
        """
        for name in names:
            other = logging.getLogger(name)
            other.handlers.clear()
            other.setLevel(logging.DEBUG)
            other.propagate = False
            for handler in self.logger.handlers:
                other.addHandler(handler)
            self.routed.append(other)

    def attach_run_log(self, path: Union[str, Path]) -> Path:
        """Start a fresh log file for this run; later records also go there."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if self.run_handler is not None:
            self._remove_handler(self.run_handler)
        self.run_handler = self._add_handler(logging.FileHandler(path, mode='w', encoding='utf-8'), self.file_level)
        self.run_log = path
        return path

    def _remove_handler(self, handler: logging.Handler):
        for target in [self.logger] + self.routed:
            target.removeHandler(handler)
        handler.close()

    def close(self):
        """Detach and close the file handlers; the console handler stays."""
        for handler in (self.file_handler, self.run_handler):
            if handler is not None:
                self._remove_handler(handler)
        self.file_handler = self.run_handler = None

    def log_run_start(self, options: Dict[str, Any]):
        self.logger.info(f"🚀 uqcloud {self.command} started")
        for key in sorted(options):
            self.logger.info(f"📋 {key} = {options[key]}")
        if self.run_log is not None:
            self.logger.debug(f"🔍 Run log: {self.run_log}")

    def log_run_end(self, exit_code: int, elapsed: float):
        status = "✅ finished" if exit_code == 0 else f"❌ failed with exit code {exit_code}"
        self.logger.info(f"{status}: uqcloud {self.command} ⏱ {elapsed:.2f}s")

    def set_debug_mode(self, enabled: bool = True):
        """Console at DEBUG when enabled, INFO otherwise."""
        self.console_handler.setLevel(logging.DEBUG if enabled else logging.INFO)
        if enabled:
            self.logger.debug("🔍 Debug mode enabled")


def timed_command(logger: logging.Logger):
    """Log how long a `cmd_<name>` handler ran, and how long it took to fail."""
    def decorator(func):
        name = func.__name__.replace("cmd_", "", 1)

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start = time.time()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                logger.error(f"❌ {name} failed after {time.time() - start:.2f}s: {e}")
                raise
            logger.debug(f"⏱ {name} took {time.time() - start:.2f}s")
            return result
        return wrapper
    return decorator
