import json
import logging
import os
import threading
from logging.handlers import TimedRotatingFileHandler
from typing import Dict, List

from app.utils.config import Config
from app.utils.datetime_handler import current_log_date, get_current_datetime

PACKAGE_LOGGER = "app"

_configure_lock = threading.Lock()


class JSONFormatter(logging.Formatter):
    """One JSON object per record, timestamped in Config.TIMEZONE."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, object] = {
            "timestamp": get_current_datetime(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "pathname": record.pathname,
            "lineno": record.lineno,
            "funcName": record.funcName,
            "thread": record.threadName,
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def _level_from_config() -> int:
    level = logging.getLevelName(Config.LOG_LEVEL)
    return level if isinstance(level, int) else logging.INFO


def build_handlers(level: int) -> List[logging.Handler]:
    """
    Handlers for the package logger: stderr always, a midnight-rotating file when LOG_TO_FILE is set.

    stdout is left to progress lines and command output.
    """
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if Config.LOG_TO_FILE:
        os.makedirs(Config.LOG_DIRECTORY, exist_ok=True)
        path = os.path.join(Config.LOG_DIRECTORY, f"{current_log_date()}.log")
        handlers.append(TimedRotatingFileHandler(path, when="midnight", interval=1, encoding="utf-8"))
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(JSONFormatter())
    return handlers


def _configure_package_logger() -> logging.Logger:
    package = logging.getLogger(PACKAGE_LOGGER)
    with _configure_lock:
        if not package.handlers:
            level = _level_from_config()
            for handler in build_handlers(level):
                package.addHandler(handler)
            package.setLevel(level)
            package.propagate = False
    return package


def setup_logging(name: str) -> logging.Logger:
    """
    Return the logger of a module, configuring the package logger on first use.

    Module loggers carry no handlers of their own; records propagate to the single
    package logger, so every module shares one stderr stream and at most one log file.
    Names outside the package (the entry point's `__main__`) are nested under it.

    Args:
        name (str): Name of the logger, normally the module's __name__.

    Returns:
        logging.Logger: Logger whose records reach the package handlers.
    """
    _configure_package_logger()
    if name != PACKAGE_LOGGER and not name.startswith(PACKAGE_LOGGER + "."):
        name = f"{PACKAGE_LOGGER}.{name}"
    return logging.getLogger(name)
