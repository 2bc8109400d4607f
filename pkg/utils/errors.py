"""Error types shared across the hierarchical segmentation packages."""


class HierarchyFormatError(ValueError):
    """Raised when class_map.csv / class_tree.json content is malformed or inconsistent."""


class UnknownClassError(KeyError):
    """Raised when a class name is not part of the parsed hierarchy."""


class DataValidationError(ValueError):
    """Raised when annotations, masks or prepared datasets violate the data contract."""


class ConfigError(ValueError):
    """Raised when a run configuration cannot be validated."""


class CheckpointMismatchError(ValueError):
    """Raised when a checkpoint was trained on a different class hierarchy."""


class NumericAbortError(RuntimeError):
    """Raised when training produces a non-finite loss."""

    def __init__(self, message: str, batch_ids=None):
        super().__init__(message)
        self.batch_ids = list(batch_ids or [])
