"""Training loop, early stopping, and the versioned checkpoint format."""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass

import torch

from .data import WindowDataset
from .errors import CheckpointError, EmptyDataset, ValidationError
from .model import DEFAULT_GAMMA, CurveForecaster, SceneVocab

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    window_length: int = 16
    horizon: int = 4
    d_model: int = 64
    k_scene: int = 8
    layers: int = 2
    heads: int = 4
    batch_size: int = 64
    learning_rate: float = 0.02
    max_epochs: int = 50
    patience: int = 3
    gamma: float = DEFAULT_GAMMA
    gated: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")
        if self.learning_rate <= 0:
            raise ValidationError(
                f"learning_rate must be > 0, got {self.learning_rate}"
            )


@dataclass(frozen=True)
class TrainResult:
    val_mse: float
    epochs_run: int
    val_history: tuple[float, ...]


def _validation_mse(model: CurveForecaster, dataset: WindowDataset) -> float:
    windows = torch.from_numpy(dataset.val_windows)
    scenes = torch.from_numpy(dataset.val_scenes)
    futures = torch.from_numpy(dataset.val_futures)
    model.eval()
    with torch.no_grad():
        pred = model(windows, scenes)
        return float(torch.mean((pred - futures) ** 2))


def train(
    dataset: WindowDataset, hyperparams: Hyperparams | None = None
) -> tuple[CurveForecaster, TrainResult]:
    """Fit a forecaster on the dataset; deterministic for a fixed seed.

    Adagrad, mini-batches in a seeded shuffled order, early stopping on
    validation MSE with the configured patience, and the best-validation
    weights restored at the end.
    """
    hp = hyperparams or Hyperparams()
    if dataset.train_count == 0 or dataset.val_count == 0:
        raise EmptyDataset(
            f"need train and val samples, got {dataset.train_count} train / "
            f"{dataset.val_count} val"
        )
    if dataset.window_length != hp.window_length or dataset.horizon != hp.horizon:
        raise ValidationError(
            "hyperparams window/horizon "
            f"({hp.window_length}/{hp.horizon}) do not match the dataset "
            f"({dataset.window_length}/{dataset.horizon})"
        )

    torch.manual_seed(hp.seed)
    torch.set_num_threads(1)  # keep reductions deterministic across runs

    model = CurveForecaster(
        variate_count=len(dataset.grid),
        window_length=hp.window_length,
        horizon=hp.horizon,
        scene_count=len(dataset.vocab),
        k_scene=hp.k_scene,
        d_model=hp.d_model,
        layers=hp.layers,
        heads=hp.heads,
        gamma=hp.gamma,
        gated=hp.gated,
    )
    optimizer = torch.optim.Adagrad(model.parameters(), lr=hp.learning_rate)

    windows = torch.from_numpy(dataset.train_windows)
    scenes = torch.from_numpy(dataset.train_scenes)
    futures = torch.from_numpy(dataset.train_futures)
    n = dataset.train_count

    best_mse = float("inf")
    best_state = None
    bad_epochs = 0
    history = []
    epochs_run = 0
    for _ in range(hp.max_epochs):
        epochs_run += 1
        model.train()
        order = torch.randperm(n)
        for start in range(0, n, hp.batch_size):
            batch = order[start:start + hp.batch_size]
            optimizer.zero_grad()
            pred = model(windows[batch], scenes[batch])
            loss = torch.mean((pred - futures[batch]) ** 2)
            loss.backward()
            optimizer.step()
        val_mse = _validation_mse(model, dataset)
        history.append(val_mse)
        if val_mse < best_mse:
            best_mse = val_mse
            best_state = copy.deepcopy(model.state_dict())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= hp.patience:
                break

    model.load_state_dict(best_state)
    model.eval()
    return model, TrainResult(
        val_mse=best_mse, epochs_run=epochs_run, val_history=tuple(history)
    )


# --- checkpoints ---------------------------------------------------------------

def save_checkpoint(
    path,
    model: CurveForecaster,
    hyperparams: Hyperparams,
    grid,
    vocab: SceneVocab,
    val_mse: float | None = None,
) -> None:
    """Versioned archive: named parameter arrays plus the manifest."""
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "hyperparams": dataclasses.asdict(hyperparams),
            "grid": [float(g) for g in grid],
            "scenes": list(vocab.scenes),
            "val_mse": val_mse,
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> tuple[CurveForecaster, dict]:
    """Rebuild the model from a checkpoint; returns (model, manifest).

    The manifest holds hyperparams, grid, scenes, and val_mse. Raises
    CheckpointError on a missing file or an unsupported format version.
    """
    try:
        blob = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, ValueError) as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(blob, dict) or "format_version" not in blob:
        raise CheckpointError(f"{path} is not a scenecast checkpoint")
    if blob["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format {blob['format_version']!r}; "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    try:
        hp = Hyperparams(**blob["hyperparams"])
        vocab = SceneVocab(scenes=tuple(blob["scenes"]))
        grid = tuple(float(g) for g in blob["grid"])
        model = CurveForecaster(
            variate_count=len(grid),
            window_length=hp.window_length,
            horizon=hp.horizon,
            scene_count=len(vocab),
            k_scene=hp.k_scene,
            d_model=hp.d_model,
            layers=hp.layers,
            heads=hp.heads,
            gamma=hp.gamma,
            gated=hp.gated,
        )
        model.load_state_dict(blob["state_dict"])
    except (KeyError, TypeError, RuntimeError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    model.eval()
    manifest = {
        "hyperparams": hp,
        "grid": grid,
        "vocab": vocab,
        "val_mse": blob.get("val_mse"),
    }
    return model, manifest
