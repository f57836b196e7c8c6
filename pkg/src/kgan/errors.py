"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, DataError -> 3,
NumericError -> 4, StatsMismatchError -> 5.
"""


class KganError(Exception):
    """Base class for all package errors."""


class ConfigError(KganError):
    """Invalid or inconsistent configuration."""


class DataError(KganError):
    """Problem with input data files or records."""


class ParseError(DataError):
    """Malformed input that could not be parsed."""


class FormatError(DataError):
    """Structurally valid input violating the expected record format."""


class AlignmentError(DataError):
    """Character span or token sequence that cannot be aligned."""


class LabelError(DataError):
    """Unknown or illegal label value."""


class TreeError(DataError):
    """Dependency head assignment that does not form a tree."""


class NumericError(KganError):
    """Numerical failure (NaN/Inf) during optimization."""


class StatsMismatchError(KganError):
    """Loaded dataset statistics disagree with the published counts."""
