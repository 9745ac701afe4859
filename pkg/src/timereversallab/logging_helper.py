"""
Colored console logging for the laboratory.

Every module of the package takes its logger from `get_logger`. The run configuration carries one `log_level` which
`set_logging_level` applies to all loggers handed out so far and to those created later, so solver and oracle messages
follow the level of the experiment that triggered them.
"""

import logging

import colorlog
from colorlog import ColoredFormatter

__log_level = logging.NOTSET

# loggers handed out by get_logger, by name
_laboratory_loggers: dict[str, logging.Logger] = {}

formatter = ColoredFormatter(
    "%(asctime)s %(log_color)s%(levelname)s%(fg_white)s:%(name)s: %(log_color)s%(message)s",
    reset=True,
    style="%",
)


def set_logging_level(log_level: int):
    """Apply the run's log level to every laboratory logger, present and future."""
    global __log_level
    __log_level = log_level
    for logger in _laboratory_loggers.values():
        logger.setLevel(log_level)


def get_logging_level() -> int:
    return __log_level


def update_log_level(logger: logging.Logger) -> logging.Logger:
    """Bring a logger obtained elsewhere to the run's log level."""
    logger.setLevel(__log_level)
    return logger


def get_logger(name: str | None) -> logging.Logger:
    """
    Logger with a colored console handler at the run's log level.

    Modules call this at import time, before any configuration is read. Asking twice for the same name returns the
    same logger with a single handler.

    :param name: dotted module name, None for the root logger
    :returns: configured logger
    """
    logger = logging.getLogger(name)
    if not any(isinstance(handler, colorlog.StreamHandler) for handler in logger.handlers):
        handler = colorlog.StreamHandler()
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    logger.setLevel(__log_level)
    _laboratory_loggers[logger.name] = logger
    return logger
