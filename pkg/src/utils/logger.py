"""Logging setup."""

import logging
from pathlib import Path
from typing import Optional, Union

DEFAULT_LOG_DIR = Path.home() / ".cache" / "stochchar"


def setup_logging(level: Union[int, str] = logging.INFO, log_dir: Optional[Path] = None):
    """Setup logging configuration."""
    log_dir = Path(log_dir) if log_dir else DEFAULT_LOG_DIR
    log_dir.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger()
    logger.setLevel(logging.DEBUG)

    # Repeated calls (tests, report after run) must not stack handlers
    for handler in list(logger.handlers):
        if getattr(handler, "_stochchar", False):
            logger.removeHandler(handler)
            handler.close()

    # File handler
    file_handler = logging.FileHandler(log_dir / "stochchar.log")
    file_handler.setLevel(logging.DEBUG)
    file_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    file_handler.setFormatter(file_formatter)
    file_handler._stochchar = True
    logger.addHandler(file_handler)

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_formatter = logging.Formatter('%(levelname)s: %(message)s')
    console_handler.setFormatter(console_formatter)
    console_handler._stochchar = True
    logger.addHandler(console_handler)
