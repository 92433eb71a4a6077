"""Exception hierarchy shared across the package."""

from __future__ import annotations


class Web3DBError(Exception):
    """Base class for every error raised by this package."""


class KeyFormatError(Web3DBError, ValueError):
    """A key is not a well-formed byte string of the expected length."""


class ConfigurationError(Web3DBError, ValueError):
    pass


class ConflictError(Web3DBError):
    pass


class AuthError(Web3DBError):
    """A signature envelope failed to verify."""


class OwnershipError(Web3DBError):
    pass


class NotFoundError(Web3DBError, LookupError):
    pass


class UnavailableError(Web3DBError, LookupError):
    """No live replica holds the requested block."""


class TamperError(Web3DBError):
    pass


class RefusalError(Web3DBError):
    """A worker rejected the consensus proof attached to a work request."""


class IncompleteError(Web3DBError):
    pass


class PlanningError(Web3DBError):
    pass


class SqlSyntaxError(Web3DBError):
    def __init__(self, message: str, line: int, column: int, offset: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.message = message
        self.line = line
        self.column = column
        self.offset = offset


class UnsupportedFeatureError(SqlSyntaxError):
    """Valid SQL that falls outside the supported grammar subset."""

    def __init__(self, construct: str, line: int, column: int, offset: int):
        super().__init__(f"unsupported feature: {construct}", line, column, offset)
        self.construct = construct
