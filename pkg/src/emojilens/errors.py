"""Exception types raised across the package.

Argument errors (bad bounds, empty inputs) are plain ``ValueError``. The
classes here separate data problems from numerical ones so the CLI can map
them to distinct exit codes.
"""


class DataError(ValueError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LexiconConflict(DataError):
    """Two lexicon rows canonicalize to the same sequence."""


class IngestError(DataError):
    pass


class ConsistencyError(DataError):
    """An aggregate references an emoji the lexicon does not know."""


class ConfigError(DataError):
    pass


class ModelLoadError(DataError):
    pass


class NumericalError(ArithmeticError):
    pass


class DegenerateError(NumericalError):
    """A statistic is undefined for the given counts."""
