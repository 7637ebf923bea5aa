"""Shared rich console and logger factory."""

import logging

from rich.console import Console
from rich.logging import RichHandler

from src.utils.config import Config

# Progress and diagnostics go to stderr so stdout stays parseable
console = Console(stderr=True)

_ROOT = "mmbench"
_configured = False


def _root() -> logging.Logger:
    global _configured
    root = logging.getLogger(_ROOT)
    if not _configured:
        handler = RichHandler(console=console, show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
        root.setLevel(Config.LOG_LEVEL.upper())
        root.propagate = False
        _configured = True
    return root


def get_logger(name: str) -> logging.Logger:
    """Return a logger under the package root, wiring the rich handler once."""
    return _root().getChild(name.removeprefix("src."))


def set_level(level: str):
    """Change the level of every package logger (e.g. from a ``--verbose`` flag)."""
    _root().setLevel(level.upper())
