"""Logging setup for fouriereg."""

import json
import logging
import sys
from pathlib import Path

from ..config.settings import LoggingConfig

ROOT_LOGGER = "fouriereg"
TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class JsonFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "timestamp": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def _handler(config: LoggingConfig) -> logging.Handler:
    if config.output == "file":
        if not config.file_path:
            raise ValueError("logging output 'file' needs a file_path")
        path = Path(config.file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return logging.FileHandler(path)
    # stdout carries command output (JSON lines, tables) unless asked otherwise
    stream = sys.stdout if config.output == "stdout" else sys.stderr
    return logging.StreamHandler(stream)


def setup_logging(config: LoggingConfig) -> None:
    """Route the ``fouriereg`` logger tree to a single configured handler."""
    logger = logging.getLogger(ROOT_LOGGER)
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(getattr(logging, config.level.upper()))

    handler = _handler(config)
    if config.format == "json":
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))
    logger.addHandler(handler)


def get_logger(name: str) -> logging.Logger:
    """Child of the ``fouriereg`` logger; a leading ``fouriereg.`` is not doubled."""
    name = name.removeprefix(f"{ROOT_LOGGER}.")
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")
