"""Exception taxonomy for the forecaster service."""


class ScenecastError(Exception):
    """Base class for every error this package raises on purpose."""


class ValidationError(ScenecastError):
    """An argument violates a documented precondition."""


class EmptyDataset(ScenecastError):
    """Training was asked to run on a dataset with no samples."""


class CheckpointError(ScenecastError):
    """A checkpoint file is missing, unreadable, or has the wrong format."""
