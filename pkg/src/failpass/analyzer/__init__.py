"""Structured parsing and comparison of CI build logs."""

from .core import (
    ErrorTag,
    LogAttributes,
    NONE_DETECTED,
    analyze,
    clean_log,
    compare,
    detect_build_system,
    detect_test_framework,
    extract_error_tags,
    extract_status,
    register_parser,
)
from . import java, pythonlogs  # noqa: F401  (parser registration)

__all__ = [
    "ErrorTag",
    "LogAttributes",
    "NONE_DETECTED",
    "analyze",
    "clean_log",
    "compare",
    "detect_build_system",
    "detect_test_framework",
    "extract_error_tags",
    "extract_status",
    "register_parser",
]
