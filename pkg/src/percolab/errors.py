"""Exception hierarchy shared by every percolab module."""


class PercolabError(Exception):
    """Base class for all library errors."""


class DomainError(PercolabError, ValueError):
    """An argument lies outside its mathematical domain."""


class RangeError(PercolabError, IndexError):
    """A vertex, edge or mesoscopic index lies outside the finite box."""


class FormatError(PercolabError, ValueError):
    """A serialized stream is malformed.

    Parameters
    ----------
    message : str
    offset : int
        Byte offset at which decoding failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnavailableError(PercolabError, RuntimeError):
    """The requested object does not exist for this configuration."""


class InsufficientDataError(PercolabError, ValueError):
    """Too few samples or usable points for the requested statistic."""


class DataQualityError(PercolabError, RuntimeError):
    """A run produced data that cannot be trusted (e.g. too many exclusions)."""


class LawViolation(PercolabError, AssertionError):
    """An exact pathwise law failed on a specific configuration.

    Parameters
    ----------
    message : str
    digest : str, optional
        SHA-256 digest of the offending configuration.
    """

    def __init__(self, message, digest=None):
        if digest is not None:
            message = f"{message} [config {digest}]"
        super().__init__(message)
        self.digest = digest
