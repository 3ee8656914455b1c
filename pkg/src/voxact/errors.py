"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
ServiceError -> 4.
"""


class VoxactError(Exception):
    """Base class for package errors."""


class ConfigError(VoxactError):
    """Invalid configuration or out-of-range parameter."""


class DataError(VoxactError):
    """Missing, malformed, or inconsistent data on disk or in memory."""


class IngestError(DataError):
    """RGB-D frame could not be loaded or decoded."""


class ServiceError(VoxactError):
    """External detection service unreachable or returned garbage."""


class FrameMismatchError(VoxactError):
    """Pose composition attempted across incompatible reference frames."""


class DetectionError(VoxactError):
    """No usable detection for the requested query."""
