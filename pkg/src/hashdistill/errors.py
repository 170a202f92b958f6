"""Exception types shared across the package."""


class HashDistillError(Exception):
    """Base class for package errors."""

    category = "error"


class ShapeCollapseError(HashDistillError):
    """A downsampling stage would reduce spatial size to zero."""

    category = "shape"

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


class ConfigError(HashDistillError):
    """Invalid or incomplete experiment configuration."""

    category = "config"


class DataError(HashDistillError):
    """Dataset files missing, corrupt, or inconsistent."""

    category = "data"


class MissingArtifactError(HashDistillError):
    """A required checkpoint, cache, or code file is absent."""

    category = "artifact"


class CenterGenerationError(HashDistillError):
    """Hash-center sampling failed to satisfy the distance property."""

    category = "centers"

    def __init__(self, message: str, best_min_distance: int, best_avg_distance: float):
        super().__init__(message)
        self.best_min_distance = best_min_distance
        self.best_avg_distance = best_avg_distance
