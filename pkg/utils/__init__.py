"""Shared helpers: error types, .env access and seeding."""

from .errors import (
    CheckpointMismatchError,
    ConfigError,
    DataValidationError,
    HierarchyFormatError,
    NumericAbortError,
    UnknownClassError,
)

__all__ = [
    'CheckpointMismatchError',
    'ConfigError',
    'DataValidationError',
    'HierarchyFormatError',
    'NumericAbortError',
    'UnknownClassError',
]
