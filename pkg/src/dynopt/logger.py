"""
This module configures and provides a centralized logging instance for the
whole toolkit.
"""
import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

DEFAULT_LOG_FILE = 'logs/dynopt.log'


class ColoredFormatter(logging.Formatter):
    """Custom formatter that adds colors to console output."""

    # ANSI color codes
    COLORS = {
        'DEBUG': '\033[36m',     # Cyan
        'INFO': '\033[32m',      # Green
        'WARNING': '\033[33m',   # Yellow
        'ERROR': '\033[31m',     # Red
        'CRITICAL': '\033[41m',  # Red background
        'RESET': '\033[0m'
    }

    def format(self, record):
        record.asctime = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
        color = self.COLORS.get(record.levelname, self.COLORS['RESET'])
        formatted_msg = (f"{color}{record.asctime} - {record.levelname} - "
                         f"{record.getMessage()}{self.COLORS['RESET']}")
        if record.exc_info:
            formatted_msg += f"\n{self.formatException(record.exc_info)}"
        return formatted_msg


def setup_logger(name: str = 'dynopt',
                 log_file: Optional[str] = None,
                 console_level: Optional[str] = None) -> logging.Logger:
    """Set up and configure the logger.

    The file handler always records DEBUG so solver iteration logs survive a
    quiet console. Calling this twice for the same name replaces the handlers
    instead of stacking them.

    Args:
        name: Name of the logger
        log_file: Path to log file (default: logs/dynopt.log)
        console_level: Console level name; falls back to the DYNOPT_LOG_LEVEL
            environment variable, then INFO

    Returns:
        Configured logger instance
    """
    log_instance = logging.getLogger(name)
    log_instance.setLevel(logging.DEBUG)
    log_instance.propagate = False
    for handler in list(log_instance.handlers):
        log_instance.removeHandler(handler)
        handler.close()

    if log_file is None:
        log_file = os.environ.get('DYNOPT_LOG_FILE', DEFAULT_LOG_FILE)
    log_path = Path(log_file)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    file_handler = logging.FileHandler(log_file)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))

    level_name = (console_level or os.environ.get('DYNOPT_LOG_LEVEL', 'INFO')).upper()
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(getattr(logging, level_name, logging.INFO))
    console_handler.setFormatter(ColoredFormatter())

    log_instance.addHandler(file_handler)
    log_instance.addHandler(console_handler)
    return log_instance


def set_console_level(level_name: str) -> None:
    """Change the console verbosity of the shared logger in place."""
    level = getattr(logging, level_name.upper(), logging.INFO)
    for handler in logger.handlers:
        if isinstance(handler, logging.StreamHandler) and not isinstance(handler, logging.FileHandler):
            handler.setLevel(level)


# Create default logger instance
logger = setup_logger()
