"""
Logging initialisation shared by the executable and the plotting utilities.

Date: 2024-03-06
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import logging
import sys

from pythonjsonlogger import jsonlogger

LOG_FORMAT_TEXT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_FORMAT_JSON = "%(asctime)s %(levelname)s %(name)s %(message)s"
LOG_FORMATS = ["text", "json"]


def setup_logging(level: str = "info", log_format: str = "text") -> None:
    """Configures the root logger to write to stderr.

    Parameters:
        level      Logging level name (error, warning, info, debug, ...)
        log_format text for human-readable lines, json for one JSON object per record"""

    handler = logging.StreamHandler(sys.stderr)

    if log_format == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT_JSON))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT_TEXT))

    logging.basicConfig(level=level.upper(), handlers=[handler], force=True)
