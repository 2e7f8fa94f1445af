"""Logging configuration for the engine."""
import logging
import sys
from typing import Optional

from config import settings

PACKAGE_LOGGERS = [
    'graph_core',
    'similarity',
    'recommender',
    'evaluation',
    'cli',
]


def setup_logging(level: Optional[str] = None):
    """Setup logging configuration for the application.

    Diagnostics go to stderr; stdout is reserved for results.
    """
    level_name = (level or settings.log_level).upper()
    numeric_level = getattr(logging, level_name, logging.INFO)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    for handler in list(root_logger.handlers):
        if getattr(handler, '_sapling_handler', False):
            root_logger.removeHandler(handler)
    console_handler._sapling_handler = True
    root_logger.addHandler(console_handler)

    for logger_name in PACKAGE_LOGGERS:
        logging.getLogger(logger_name).setLevel(numeric_level)

    # Reduce noise from external libraries
    logging.getLogger('numexpr').setLevel(logging.WARNING)

    logging.getLogger(__name__).debug(f"Logging configured at {level_name}")
