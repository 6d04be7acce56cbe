#!/usr/bin/env python3
"""
Shared Helper Functions

Common utilities used by the CLI handlers and the systems: logging setup,
.env loading, directory and file checks and deterministic JSON.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from dotenv import load_dotenv

LOG_FORMAT = "[%(levelname)s] %(message)s"


def setup_logging(verbose: bool = False, quiet: bool = False):
    """
    Configure the root logger once for a CLI invocation

    Args:
        verbose: DEBUG level (per-epoch detail)
        quiet: WARNING level; ignored when verbose is set
    """
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def load_environment_variables() -> Optional[Path]:
    """
    Load the first .env found in the working directory or project root

    Returns:
        Path of the loaded file, or None
    """
    for env_file in (Path.cwd() / ".env", Path(__file__).parent.parent / ".env"):
        if env_file.exists():
            load_dotenv(env_file, override=False)
            return env_file
    return None


def create_directories(directories: Iterable[Union[str, Path]]):
    for dir_path in directories:
        Path(dir_path).mkdir(parents=True, exist_ok=True)


def validate_file_path(file_path: Union[str, Path], handle_at_symbol: bool = True) -> Optional[Path]:
    """
    Validate and return Path object for an input file

    Args:
        file_path: Path to file (supports @ notation if enabled)
        handle_at_symbol: Whether to strip a leading @

    Returns:
        Path object if it names an existing file, None otherwise
    """
    text = str(file_path)
    if handle_at_symbol and text.startswith("@"):
        text = text[1:]

    path_obj = Path(text)
    if not path_obj.exists():
        logging.getLogger(__name__).error("File not found: %s", path_obj)
        return None
    if not path_obj.is_file():
        logging.getLogger(__name__).error("Path is not a file: %s", path_obj)
        return None
    return path_obj


def format_duration(seconds: float) -> str:
    """Format elapsed seconds as '1h 2m 3s', '2m 3s' or '3.4s'"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes, secs = divmod(int(seconds), 60)
    hours, minutes = divmod(minutes, 60)
    if hours > 0:
        return f"{hours}h {minutes}m {secs}s"
    return f"{minutes}m {secs}s"


def write_json(path: Union[str, Path], payload: Any):
    """Sorted keys and a trailing newline, so equal payloads give equal bytes"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
