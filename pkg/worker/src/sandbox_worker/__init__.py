"""Stdio execution worker: one fresh interpreter per request."""

from .worker import OUTPUT_CAP_CHARS, run_request, serve

__all__ = ["OUTPUT_CAP_CHARS", "run_request", "serve"]
__version__ = "0.1.0"
