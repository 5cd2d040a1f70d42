"""Exception types raised across the package."""


class VCSError(Exception):
    """Base class for all package errors."""


class DimensionError(VCSError, ValueError):
    """Array shapes are inconsistent or outside the allowed range."""


class CapacityError(VCSError, MemoryError):
    """A dense oracle was asked for more storage than its guard allows."""


class NumericError(VCSError, FloatingPointError):
    """A non-finite value appeared where a finite one is required."""


class FileFormatError(VCSError, IOError):
    """A VCUB file or image could not be parsed or written."""


class ConfigError(VCSError, ValueError):
    """A run configuration is malformed or contains unknown keys."""
