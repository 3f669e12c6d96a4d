"""Logging for the relighting engine.

Every module logs through a child of the ``relight`` logger; the CLI configures
the console once, and training runs mirror their messages into ``train.log``
inside the run directory.
"""
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

ROOT_LOGGER_NAME = "relight"
MESSAGE_FORMAT = "%(levelname)s: %(message)s"
FILE_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_LEVEL_COLORS = {
    logging.DEBUG: "\033[36m",
    logging.INFO: "\033[32m",
    logging.WARNING: "\033[33m",
    logging.ERROR: "\033[31m",
    logging.CRITICAL: "\033[35m",
}
_RESET = "\033[0m"


class ColoredFormatter(logging.Formatter):
    """Level names in ANSI color; the record itself is left untouched."""

    def format(self, record):
        color = _LEVEL_COLORS.get(record.levelno)
        text = super().format(record)
        if color is None:
            return text
        return text.replace(record.levelname, f"{color}{record.levelname}{_RESET}", 1)


def setup_logging(level: str = "INFO", quiet: bool = False) -> logging.Logger:
    """Configure console output for the ``relight`` logger.

    Args:
        level: DEBUG, INFO, WARNING, ERROR or CRITICAL
        quiet: only ERROR and above, whatever ``level`` says

    Returns:
        The configured root logger
    """
    numeric_level = logging.ERROR if quiet else getattr(logging, level.upper(), logging.INFO)

    logger = logging.getLogger(ROOT_LOGGER_NAME)
    logger.setLevel(numeric_level)
    for handler in list(logger.handlers):
        if not isinstance(handler, logging.FileHandler):
            logger.removeHandler(handler)

    console = logging.StreamHandler(sys.stdout)
    console.setLevel(numeric_level)
    formatter_class = ColoredFormatter if sys.stdout.isatty() else logging.Formatter
    console.setFormatter(formatter_class(fmt=MESSAGE_FORMAT))
    logger.addHandler(console)
    logger.propagate = False
    return logger


@contextmanager
def run_log(path: Path) -> Iterator[Path]:
    """Copy INFO-and-above messages into ``path`` for the duration of a run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setLevel(logging.INFO)
    handler.setFormatter(logging.Formatter(fmt=FILE_FORMAT))
    logger = logging.getLogger(ROOT_LOGGER_NAME)
    if logger.getEffectiveLevel() > logging.INFO:
        # Console handlers carry their own level, so a quiet console stays quiet
        logger.setLevel(logging.INFO)
    logger.addHandler(handler)
    try:
        yield path
    finally:
        logger.removeHandler(handler)
        handler.close()


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """The ``relight`` logger, or its child ``relight.<name>``."""
    if name:
        return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")
    return logging.getLogger(ROOT_LOGGER_NAME)
