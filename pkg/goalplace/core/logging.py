import logging

from rich.console import Console
from rich.logging import RichHandler

PACKAGE_LOGGER = "goalplace"


def setup_logging(level: str | int = "INFO") -> logging.Logger:
    """Attach a single stderr RichHandler to the package logger."""
    logger = logging.getLogger(PACKAGE_LOGGER)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(
            console=Console(stderr=True),
            show_path=False,
            rich_tracebacks=False,
        )
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(level.upper() if isinstance(level, str) else level)
    return logger
