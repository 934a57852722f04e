"""Exception types shared across aurlab.

Every error raised on purpose by the library derives from :class:`AurlabError`
so callers (and the CLI) can map failures to exit codes without catching
unrelated exceptions.
"""


class AurlabError(Exception):
    """Base class for all library errors."""


class ConfigError(AurlabError, ValueError):
    """Invalid parameters, descriptors, or configuration documents."""


class DimensionError(AurlabError, ValueError):
    """An array does not have the shape the operation requires."""


class FormulaInvalidError(AurlabError, ValueError):
    """A closed form was requested outside the parameter range where it holds."""


class SamplingError(AurlabError, RuntimeError):
    """A sampler could not produce the requested batch."""


class RankDeficientError(AurlabError, ValueError):
    """An unregularized least-squares system is numerically singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DataError(AurlabError, ValueError):
    """Input data could not be read or is unusable after cleaning."""
