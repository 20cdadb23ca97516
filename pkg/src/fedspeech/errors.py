"""Exception types shared across the toolkit."""

from __future__ import annotations


class FedspeechError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FedspeechError):
    """Invalid configuration file, flag value, or specification field."""


class DegenerateInputError(FedspeechError):
    """An input too short (or otherwise degenerate) for the requested operation."""


class MalformedRowError(FedspeechError):
    """A manifest row that cannot be parsed; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class MissingColumnError(FedspeechError):
    """A required manifest column is absent."""


class TooFewSpeakersError(FedspeechError):
    """Fewer distinct speakers than requested client partitions."""


class InvalidSampleSizeError(FedspeechError):
    """Round scheduling parameters that cannot produce a valid schedule."""


class MissingAnchorError(FedspeechError):
    """No measured anchor matches the requested architecture and precision."""


class UnsupportedPrecisionError(FedspeechError):
    """The device does not support the requested numerical precision."""


class EmptyUpdateSetError(FedspeechError):
    """Aggregation was asked to combine zero client updates."""


class DimensionMismatchError(FedspeechError):
    """Client weight vectors of unequal dimension."""


class InvalidRatioError(FedspeechError):
    """A slow/fast time ratio below 1, for which no parity forecast exists."""


class InfeasibleError(FedspeechError):
    """A requested plan was found infeasible (for example a failed memory fit)."""
