import os
import sys
from typing import Optional

from loguru import logger

LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {message}"


def configure_logging(level: Optional[str] = None) -> None:
    """Replace loguru's default sink with one stderr sink at `level` (NFJSIM_LOG_LEVEL or WARNING)."""
    level = (level or os.getenv("NFJSIM_LOG_LEVEL") or "WARNING").upper()
    logger.remove()
    logger.add(sys.stderr, level=level, format=LOG_FORMAT)
