"""
logging_config.py
-------------------

This module provides a centralized logging configuration for the entire project.

It sets up a single logger instance that can be imported and used by any other
module. This ensures that all log messages have a consistent format and destination.

The logger outputs to the console (INFO level); `attach_file_handler` adds a
file destination on demand. Training progress lines go through the child
logger `epoch_logger`, which the `train` subcommand mirrors into a
message-only `train.log` so that the file is reproducible.

Usage (in other modules):
-------------------------
from core.logging_config import logger

logger.info("This is an informational message.")
logger.error("This is an error message.")
"""

import logging
import sys
from pathlib import Path

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# 1. Create a logger instance
logger = logging.getLogger("gahne")
logger.setLevel(logging.DEBUG)  # Set the lowest level to capture all messages

epoch_logger = logging.getLogger("gahne.epochs")

# 2. Console handler (prints to stdout)
console_handler = logging.StreamHandler(sys.stdout)
console_handler.setLevel(logging.INFO)
console_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))

# Avoid adding handlers if they already exist (e.g., in interactive environments)
if not logger.handlers:
    logger.addHandler(console_handler)


def attach_file_handler(
    path: Path,
    level: int = logging.DEBUG,
    target: logging.Logger = logger,
    message_only: bool = False,
) -> logging.FileHandler:
    """Adds a file handler to `target`; callers detach it with `detach_handler`."""
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setLevel(level)
    if message_only:
        handler.setFormatter(logging.Formatter("%(message)s"))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    target.addHandler(handler)
    return handler


def detach_handler(handler: logging.Handler, target: logging.Logger = logger) -> None:
    target.removeHandler(handler)
    handler.close()
