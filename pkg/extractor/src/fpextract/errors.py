"""Exception hierarchy for the extractor package."""

from __future__ import annotations


class ExtractorError(Exception):
    """Base class for every error raised by fpextract."""


class ParameterError(ExtractorError):
    """A configuration value is out of its legal range."""


class CheckpointError(ExtractorError):
    """A backbone's pretrained checkpoint is missing or cannot be loaded."""


class DecodeError(ExtractorError):
    """An audio file cannot be decoded."""


class FormatError(ExtractorError):
    """A binary artifact violates its file-format contract."""
