"""Logging setup for the simulator and its sweep workers.

Library modules only ever call ``logging.getLogger(__name__)``. The command
line entry point calls :func:`configure_logging` once in the parent process,
and the sweep pool calls it again in every worker so that all processes append
to the same run log. The shared file is handled by
``ConcurrentRotatingFileHandler``, which serialises writes from several
processes with a lock file next to the log.
"""

import logging
import logging.config
import os
from typing import Any, Dict, Optional

__all__ = ["LOG_FORMAT", "configure_logging", "logging_config"]

LOG_FORMAT = "[%(asctime)s][%(levelname)s][%(processName)s][%(name)s] %(message)s"

LOG_MAX_BYTES = 10 * 1024 * 1024
LOG_BACKUP_COUNT = 5


def logging_config(
    log_file: Optional[str] = None,
    level: str = "INFO",
    debug: bool = False,
) -> Dict[str, Any]:
    """Build the ``dictConfig`` dictionary for a run.

    :param log_file: path of the shared run log; console only when None.
    :param level: level for the package logger.
    :param debug: force DEBUG, which adds one record per frame close.
    """
    package_level = "DEBUG" if debug else level.upper()
    handlers: Dict[str, Dict[str, Any]] = {
        "console": {
            "level": package_level,
            "class": "logging.StreamHandler",
            "formatter": "default",
            "stream": "ext://sys.stderr",
        },
    }
    if log_file:
        log_dir = os.path.dirname(os.path.abspath(log_file))
        os.makedirs(log_dir, exist_ok=True)
        handlers["run_log"] = {
            "level": package_level,
            "class": "concurrent_log_handler.ConcurrentRotatingFileHandler",
            "formatter": "default",
            "filename": log_file,
            "maxBytes": LOG_MAX_BYTES,
            "backupCount": LOG_BACKUP_COUNT,
            "encoding": "utf-8",
        }

    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {"default": {"format": LOG_FORMAT}},
        "handlers": handlers,
        "loggers": {
            "cognitive_delay_scheduler": {
                "handlers": list(handlers),
                "level": package_level,
                "propagate": False,
            },
        },
    }


def configure_logging(
    log_file: Optional[str] = None,
    level: str = "INFO",
    debug: bool = False,
) -> None:
    """Install the run logging configuration in the current process."""
    # Import registers the handler class so dictConfig can resolve it by name.
    import concurrent_log_handler  # noqa: F401

    logging.config.dictConfig(logging_config(log_file, level=level, debug=debug))
