from __future__ import annotations

import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

from .params import log_level


def configure_logging(level: Optional[str] = None) -> logging.Logger:
    """Route the package's log records to a rich handler on stderr.

    ``level`` defaults to ``GMIS_LOG_LEVEL`` (WARNING when unset).
    """

    logger = logging.getLogger("gmis")
    handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel((level or log_level()).upper())
    logger.propagate = False
    return logger
