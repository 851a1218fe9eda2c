"""Exception taxonomy for the toolbox pipeline.

Every error raised on purpose by this package derives from ForgeError so
callers (and the CLI) can distinguish domain failures from genuine bugs.
``exit_code`` is what the CLI returns when the error escapes to the top.
"""

from __future__ import annotations


class ForgeError(Exception):
    """Base class for all domain errors raised by this package."""

    exit_code = 1


class ConfigError(ForgeError):
    """Invalid or missing configuration (bad flag values, absent files)."""

    exit_code = 2


class TemplateError(ForgeError):
    """A prompt template is missing or was rendered without a required value."""


class BookParseError(ForgeError):
    """A reference document does not follow the expected structure."""


class StructuredOutputError(ForgeError):
    """A model reply could not be parsed into the expected JSON shape.

    ``raw`` carries the offending text so callers can log or display it.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class ToolParseError(StructuredOutputError):
    """A tool-generation reply is not a usable list of tool records."""


class RefineParseError(ToolParseError):
    """A refinement reply is not a single corrected tool record."""


class SelectionParseError(StructuredOutputError):
    """A selection reply has no parseable bracketed index list."""


class CodeExtractionError(StructuredOutputError):
    """A solution reply contains no code block to execute."""


class TransportError(ForgeError):
    """The model provider stayed unreachable after all retries."""


class MockMissError(ForgeError):
    """A replayed transcript has no entry for the issued prompt."""


class SandboxError(ForgeError):
    """The execution worker broke protocol or died mid-request."""


class InfrastructureError(ForgeError):
    """A retried infrastructure failure that still did not recover."""


class ToolboxFormatError(ForgeError):
    """A persisted toolbox file is structurally invalid."""


class ToolboxVersionError(ToolboxFormatError):
    """A persisted toolbox uses a schema this build does not understand."""

    def __init__(self, expected: int, found: object):
        super().__init__(
            f"unsupported toolbox schema version: expected <= {expected}, found {found!r}"
        )
        self.expected = expected
        self.found = found


class BenchmarkLoadError(ForgeError):
    """A benchmark file has a malformed or incomplete record."""


class EvalError(ForgeError):
    """An evaluation run was asked to do something meaningless."""
