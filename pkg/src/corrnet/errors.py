"""Exception hierarchy.

Two families matter to callers: ``CorrnetError`` subclasses that describe a
bad value or configuration (CLI exit code 1) and ``DataFormatError``
subclasses that describe unreadable or malformed files (CLI exit code 2).
"""


class CorrnetError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(CorrnetError, ValueError):
    pass


class DomainError(CorrnetError, ValueError):
    pass


class ConfigError(CorrnetError, ValueError):
    pass


class DataError(CorrnetError, ValueError):
    pass


class MetricError(CorrnetError, ValueError):
    pass


class DataFormatError(CorrnetError):
    """A file exists but cannot be decoded."""


class MalformedFileError(DataFormatError):
    pass


class FormatError(DataFormatError):
    """Wrong magic bytes or unrecognised header."""


class ParseError(DataFormatError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")
