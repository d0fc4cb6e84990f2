"""Scene-gated transformer forecaster served over a small JSON protocol."""

from .data import WindowDataset, default_grid, make_dataset, synthetic_rows
from .errors import CheckpointError, EmptyDataset, ScenecastError, ValidationError
from .model import (
    DEFAULT_GAMMA,
    DEFAULT_SCENE,
    CurveForecaster,
    GatedVariateEmbedding,
    SceneVocab,
    gated_embed,
)
from .service import (
    ENDPOINT_PATH,
    PROTOCOL_VERSION,
    ModelBundle,
    build_server,
    handle_request,
    serve_stdio,
)
from .train import (
    CHECKPOINT_FORMAT_VERSION,
    Hyperparams,
    TrainResult,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "CHECKPOINT_FORMAT_VERSION",
    "CheckpointError",
    "CurveForecaster",
    "DEFAULT_GAMMA",
    "DEFAULT_SCENE",
    "EmptyDataset",
    "ENDPOINT_PATH",
    "GatedVariateEmbedding",
    "Hyperparams",
    "ModelBundle",
    "PROTOCOL_VERSION",
    "SceneVocab",
    "ScenecastError",
    "TrainResult",
    "ValidationError",
    "WindowDataset",
    "build_server",
    "default_grid",
    "gated_embed",
    "handle_request",
    "load_checkpoint",
    "make_dataset",
    "save_checkpoint",
    "serve_stdio",
    "synthetic_rows",
    "train",
]
