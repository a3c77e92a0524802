"""Exception types separating configuration problems from data problems.

The CLI maps these onto exit codes: configuration/usage errors exit with 2,
data errors with 3.
"""


class DwipcError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DwipcError):
    """Invalid configuration, experiment setup, or unusable inputs."""


class DataError(DwipcError):
    """Base class for malformed or inconsistent data."""


class MissingFileError(DataError):
    """A required header, payload, or table file does not exist."""


class DimsMismatchError(DataError):
    """Grid dimensions disagree between objects or between header and payload."""


class TruncatedPayloadError(DataError):
    """A raw payload is shorter than its header promises."""


class InvalidDataError(DataError):
    """Payload values violate an invariant (non-finite, out of range, ...)."""
