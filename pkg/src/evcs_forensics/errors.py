"""Exception hierarchy shared by every stage of the toolkit."""


class ForensicsError(Exception):
    """Base class for data errors (CLI exit status 2)."""


class ConfigError(ForensicsError):
    pass


class MalformedTimestamp(ForensicsError, ValueError):
    pass


class EmptyState(ForensicsError):
    pass


class UnknownEntity(ForensicsError, KeyError):
    pass


class InvalidModel(ForensicsError):
    pass


class IndexOutOfRange(ForensicsError, IndexError):
    pass


class ZeroMarginal(ForensicsError):
    pass


class MalformedLine(ForensicsError, ValueError):
    pass


class FileUnreadable(ForensicsError, OSError):
    pass


class InvalidFilter(ForensicsError, ValueError):
    pass


class EmptyGroup(ForensicsError):
    pass


class EmptyTimeline(ForensicsError):
    pass


class MissingAttribution(ForensicsError):
    """Raised when investigator input lacks one or more 5Ws & 1H attributes."""

    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__("missing attribution(s): " + ", ".join(self.missing))


class InvalidScenario(ForensicsError):
    pass


class MismatchedOrigin(ForensicsError):
    pass
