"""Shared rich console and leveled log lines."""

from rich.console import Console

from .config import get_config

console = Console()
err_console = Console(stderr=True)

_LEVELS = {"DEBUG": 10, "INFO": 20, "WARNING": 30, "ERROR": 40, "CRITICAL": 50}
_STYLES = {"DEBUG": "dim", "INFO": "cyan", "WARNING": "yellow", "ERROR": "red", "CRITICAL": "bold red"}


def log(component: str, message: str, level: str = "INFO") -> None:
    """Print a timestamped `[component] message` line if level passes the configured threshold."""
    level = level.upper()
    if _LEVELS.get(level, 20) < _LEVELS.get(get_config().log_level, 20):
        return
    style = _STYLES.get(level, "white")
    err_console.log(f"[{style}]\\[{component}][/{style}] {message}", markup=True, highlight=False)
