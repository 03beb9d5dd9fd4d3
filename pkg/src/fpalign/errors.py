"""Exception hierarchy shared by all fpalign modules."""


class FpalignError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FpalignError):
    """An argument value is outside its documented range."""


class ShapeError(FpalignError):
    """Array dimensions do not match what an operation requires."""


class DegenerateVectorError(ParameterError):
    """A vector with (near-)zero norm where a direction is required."""


class UnderdeterminedError(ParameterError):
    """Too few (or too degenerate) points to fit the requested model."""


class ParseError(FpalignError):
    """A binary or text artifact on disk violates its format contract."""


class DataError(FpalignError):
    """Well-formed input whose content is inconsistent (missing keys, bad rows)."""


class ConfigError(FpalignError):
    """Invalid run configuration (bad paths, contradictory options)."""
