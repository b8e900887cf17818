"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class EnsembleError(Exception):
    exit_code = 1


class ConfigError(EnsembleError, ValueError):
    """Invalid configuration or mismatched dimensions."""

    exit_code = 2


class DataError(EnsembleError, ValueError):
    """Bad input data: non-positive values, malformed rows, missing files."""

    exit_code = 3


class IngestionError(DataError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class InsufficientDataError(DataError):
    pass


class EstimatorError(DataError):
    """Covariance estimate is not positive semi-definite."""


class CapacityError(EnsembleError):
    exit_code = 4

    def __init__(self, message: str, count: int | None = None):
        self.count = count
        super().__init__(message)


class SupportError(EnsembleError):
    pass


class PartitionError(ConfigError):
    pass


class DomainError(ConfigError):
    pass
