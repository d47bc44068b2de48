"""Exception types raised across the package."""


class KoPauseError(Exception):
    """Base class for all package errors."""


class CompositionError(KoPauseError, ValueError):
    """A jamo sequence does not form valid syllable blocks."""

    def __init__(self, index: int, message: str):
        super().__init__(f"{message} at index {index}")
        self.index = index


class EncodingError(KoPauseError, KeyError):
    """A symbol is missing from the symbol table."""

    def __init__(self, symbol: str, position: int):
        super().__init__(f"symbol {symbol!r} (U+{ord(symbol):04X}) at position {position} not in symbol table")
        self.symbol = symbol
        self.position = position

    def __str__(self):
        return self.args[0]


class ParseError(KoPauseError, ValueError):
    """Malformed bracketed tree."""

    def __init__(self, position: int, message: str):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class BoundaryRangeError(KoPauseError, IndexError):
    """A boundary offset lies outside the text."""


class AudioError(KoPauseError, ValueError):
    """Unreadable, empty, or unsupported audio."""


class RateMismatchError(AudioError):
    """Audio sample rate differs from the configured rate."""


class NumericError(KoPauseError, FloatingPointError):
    """Non-finite values appeared in a named computation."""

    def __init__(self, where: str):
        super().__init__(f"non-finite values in {where}")
        self.where = where


class ShapeError(KoPauseError, ValueError):
    """Tensor dimensions disagree."""


class CheckpointError(KoPauseError):
    """Checkpoint cannot be read or is incompatible."""


class ConfigError(KoPauseError, ValueError):
    """Invalid or mismatched configuration."""
