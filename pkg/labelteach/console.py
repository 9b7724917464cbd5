# labelteach/console.py
"""
Tagged console logging.

Progress goes to stderr as `[TAG] message` lines; anything meant for a pipe
(resolved config banner, theorem reports) is printed to stdout by the caller.
"""

import os

from rich.console import Console

_err = Console(stderr=True, highlight=False, soft_wrap=True)
_out = Console(highlight=False, soft_wrap=True)

_quiet = os.getenv("LABELTEACH_QUIET", "").strip().lower() in ("1", "true", "yes")

_STYLES = {
    "ERROR": "bold red",
    "WARN": "yellow",
    "SUITE": "cyan",
}


def set_quiet(flag: bool) -> None:
    global _quiet
    _quiet = bool(flag)


def log(tag: str, message: str) -> None:
    """Print `[TAG] message` to stderr. ERROR lines ignore quiet mode."""
    tag = tag.upper()
    if _quiet and tag != "ERROR":
        return
    style = _STYLES.get(tag)
    _err.print(f"[{tag}] {message}", style=style, markup=False)


def stdout() -> Console:
    return _out
