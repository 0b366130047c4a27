"""Exception types shared across the package."""

from __future__ import annotations


class InvalidArgument(ValueError):
    """A caller passed an argument outside the operation's contract."""


class EmptyError(LookupError):
    """An operation needs mass or contents that are not there."""


class EmptyTreeError(EmptyError):
    pass


class EmptyBufferError(EmptyError):
    pass


class NumericError(ArithmeticError):
    """A non-finite value showed up where a finite one is required."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


class LogParseError(ValueError):
    """A replay log is truncated or corrupt at ``offset`` bytes."""

    def __init__(self, offset: int, message: str) -> None:
        super().__init__(f"byte {offset}: {message}")
        self.offset = offset
